#include "handover/kinematics.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "handover/error.hpp"
#include "handover/log.hpp"
#include "handover/motion.hpp"

namespace handover {

char axis_name(Axis a) {
    switch (a) {
        case Axis::X: return 'X';
        case Axis::Y: return 'Y';
        case Axis::Z: return 'Z';
    }
    return '?';
}

Skeleton::Skeleton(std::vector<JointSpec> joints) : joints_(std::move(joints)) {
    if (joints_.empty()) throw StructuralError("skeleton has no joints");
    int roots = 0;
    for (std::size_t i = 0; i < joints_.size(); ++i) {
        const auto& j = joints_[i];
        if (j.parent < 0) {
            ++roots;
            if (i != 0) throw StructuralError("root joint '" + j.name + "' must be the first joint");
        } else if (static_cast<std::size_t>(j.parent) >= i) {
            throw StructuralError("joint '" + j.name + "' is not topologically sorted (parent index " +
                                  std::to_string(j.parent) + " >= " + std::to_string(i) + ")");
        }
        if (j.dof.size() > 3) throw StructuralError("joint '" + j.name + "' has more than 3 dof axes");
        for (std::size_t a = 0; a < j.dof.size(); ++a) {
            if (j.dof[a].min_angle > j.dof[a].max_angle)
                throw ValidationError("joint '" + j.name + "' has min > max angle limit");
            for (std::size_t b = 0; b < a; ++b)
                if (j.dof[a].axis == j.dof[b].axis)
                    throw StructuralError("joint '" + j.name + "' repeats a dof axis");
        }
    }
    if (roots != 1) throw StructuralError("skeleton must have exactly one root, found " + std::to_string(roots));
}

std::size_t Skeleton::dof_count() const noexcept {
    std::size_t n = 0;
    for (const auto& j : joints_) n += j.dof.size();
    return n;
}

std::optional<std::size_t> Skeleton::find(std::string_view name) const {
    for (std::size_t i = 0; i < joints_.size(); ++i)
        if (joints_[i].name == name) return i;
    return std::nullopt;
}

std::size_t Skeleton::index_of(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw LookupError("no joint named '" + std::string(name) + "'");
}

Skeleton Skeleton::synthetic_body() {
    constexpr double pi = std::numbers::pi;
    auto zxy = [](double lim) {
        return std::vector<DofAxis>{{Axis::Z, -lim, lim}, {Axis::X, -lim, lim}, {Axis::Y, -lim, lim}};
    };
    std::vector<JointSpec> j;
    j.push_back({"Hips", -1, {0, 0, 0}, {}});
    j.push_back({"Back", 0, {0, 0.10, 0}, zxy(0.4)});
    j.push_back({"UpperBack", 1, {0, 0.14, 0}, zxy(0.4)});
    j.push_back({"ChestNotch", 2, {0, 0.16, 0.02}, zxy(0.3)});
    j.push_back({"Neck", 3, {0, 0.06, 0}, zxy(0.7)});
    j.push_back({"Head", 4, {0, 0.10, 0}, zxy(0.7)});
    j.push_back({"Face", 5, {0, 0.08, 0.09}, {}});
    for (int side = 0; side < 2; ++side) {
        const double sx = side == 0 ? 1.0 : -1.0;
        const std::string p = side == 0 ? "Left" : "Right";
        const int base = static_cast<int>(j.size());
        j.push_back({p + "Clavicle", 3, {sx * 0.03, -0.02, 0}, {{Axis::Z, -0.35, 0.35}, {Axis::Y, -0.35, 0.35}}});
        j.push_back({p + "Shoulder", base, {sx * 0.15, 0, -0.02}, zxy(pi)});
        j.push_back({p + "Elbow", base + 1, {0, -0.28, 0}, {{Axis::X, -2.8, 0.05}}});
        j.push_back({p + "Wrist", base + 2, {0, -0.25, 0}, {{Axis::Z, -1.2, 1.2}, {Axis::X, -1.2, 1.2}}});
        j.push_back({p + "Hand", base + 3, {0, -0.08, 0}, {{Axis::X, -0.6, 0.6}}});
    }
    return Skeleton(std::move(j));
}

Pose Pose::rest(const Skeleton& skeleton) {
    Pose p;
    p.joint_angles.assign(skeleton.size(), Vec3::Zero());
    return p;
}

Mat3 axis_rotation(Axis axis, double angle) {
    const Vec3 unit = Vec3::Unit(static_cast<int>(axis));
    return Eigen::AngleAxisd(angle, unit).toRotationMatrix();
}

Mat3 euler_to_matrix(const std::vector<DofAxis>& dof, const Vec3& angles) {
    Mat3 r = Mat3::Identity();
    for (std::size_t a = 0; a < dof.size(); ++a) r = r * axis_rotation(dof[a].axis, angles[a]);
    return r;
}

Mat3 euler_to_matrix(const std::array<Axis, 3>& order, const Vec3& angles) {
    return axis_rotation(order[0], angles[0]) * axis_rotation(order[1], angles[1]) *
           axis_rotation(order[2], angles[2]);
}

Vec3 matrix_to_euler(const std::array<Axis, 3>& order, const Mat3& r) {
    const int i = static_cast<int>(order[0]);
    const int j = static_cast<int>(order[1]);
    const int k = static_cast<int>(order[2]);
    if (i == j || j == k || i == k) throw ValidationError("euler order must use three distinct axes");
    // +1 for cyclic orders (XYZ, YZX, ZXY), -1 otherwise.
    const double s = ((j - i + 3) % 3 == 1) ? 1.0 : -1.0;
    const double sb = std::clamp(s * r(i, k), -1.0, 1.0);
    const double cb = std::hypot(r(i, i), r(i, j));
    const double b = std::atan2(sb, cb);
    double a;
    double c;
    if (cb > 1e-12) {
        a = std::atan2(-s * r(j, k), r(k, k));
        c = std::atan2(-s * r(i, j), r(i, i));
    } else {
        // Gimbal lock: only a +/- c is determined; put it all on the first axis.
        c = 0.0;
        a = std::atan2(s * r(k, j), r(j, j));
    }
    return {a, b, c};
}

Vec3 matrix_to_joint_angles(const std::vector<DofAxis>& dof, const Mat3& r) {
    if (dof.empty()) return Vec3::Zero();
    if (dof.size() == 1) {
        // Single-axis joints: read the angle straight off the rotation plane.
        const int a = static_cast<int>(dof[0].axis);
        const int b = (a + 1) % 3;
        const int c = (a + 2) % 3;
        return {std::atan2(r(c, b), r(b, b)), 0.0, 0.0};
    }
    std::array<Axis, 3> order{};
    bool used[3] = {false, false, false};
    for (std::size_t a = 0; a < dof.size(); ++a) {
        order[a] = dof[a].axis;
        used[static_cast<int>(dof[a].axis)] = true;
    }
    for (int ax = 0, n = static_cast<int>(dof.size()); ax < 3; ++ax)
        if (!used[ax]) order[n++] = static_cast<Axis>(ax);
    Vec3 angles = matrix_to_euler(order, r);
    for (std::size_t a = dof.size(); a < 3; ++a) angles[a] = 0.0;
    return angles;
}

bool is_rotation(const Mat3& r, double tolerance) {
    if (!r.allFinite()) return false;
    return (r.transpose() * r - Mat3::Identity()).norm() <= tolerance &&
           std::abs(r.determinant() - 1.0) <= tolerance;
}

Mat3 local_rotation(const Skeleton& skeleton, const Pose& pose, std::size_t j) {
    if (j == 0) return pose.root_rotation;
    return euler_to_matrix(skeleton.joint(j).dof, pose.joint_angles[j]);
}

FkResult forward_kinematics_full(const Skeleton& skeleton, const Pose& pose) {
    const std::size_t n = skeleton.size();
    if (pose.joint_angles.size() != n)
        throw StructuralError("pose has " + std::to_string(pose.joint_angles.size()) +
                              " joint entries, skeleton has " + std::to_string(n));
    FkResult out;
    out.positions.resize(n);
    out.rotations.resize(n);
    out.positions[0] = pose.root_position + pose.root_rotation * skeleton.joint(0).offset;
    out.rotations[0] = pose.root_rotation;
    for (std::size_t j = 1; j < n; ++j) {
        const auto& spec = skeleton.joint(j);
        const auto p = static_cast<std::size_t>(spec.parent);
        out.positions[j] = out.positions[p] + out.rotations[p] * spec.offset;
        out.rotations[j] = out.rotations[p] * euler_to_matrix(spec.dof, pose.joint_angles[j]);
    }
    return out;
}

std::vector<Vec3> forward_kinematics(const Skeleton& skeleton, const Pose& pose) {
    return forward_kinematics_full(skeleton, pose).positions;
}

Rotation6D matrix_to_6d(const Mat3& r) {
    if (!is_rotation(r, 1e-4)) throw ValidationError("matrix_to_6d: input is not a proper rotation");
    Rotation6D out;
    out.v << r.col(0), r.col(1);
    return out;
}

Mat3 sixd_to_matrix(const Vec6& v) {
    if (!v.allFinite()) throw DegenerateError("sixd_to_matrix: non-finite input");
    const Vec3 a1 = v.head<3>();
    const Vec3 a2 = v.tail<3>();
    const double n1 = a1.norm();
    if (n1 < 1e-12) throw DegenerateError("sixd_to_matrix: first column has zero norm");
    const Vec3 c1 = a1 / n1;
    const Vec3 u2 = a2 - c1.dot(a2) * c1;
    const double n2 = u2.norm();
    if (n2 < 1e-12 * std::max(1.0, a2.norm())) throw DegenerateError("sixd_to_matrix: columns are parallel");
    const Vec3 c2 = u2 / n2;
    Mat3 r;
    r << c1, c2, c1.cross(c2);
    return r;
}

Mat3 sixd_to_matrix(const Rotation6D& r6) { return sixd_to_matrix(r6.v); }

std::size_t validate_pose(const Skeleton& skeleton, Pose& pose) {
    if (pose.joint_angles.size() != skeleton.size())
        throw StructuralError("pose has " + std::to_string(pose.joint_angles.size()) +
                              " joint entries, skeleton has " + std::to_string(skeleton.size()));
    if (!is_rotation(pose.root_rotation, 1e-6)) throw ValidationError("root rotation is not orthonormal");
    std::size_t clamped = 0;
    for (std::size_t j = 0; j < skeleton.size(); ++j) {
        const auto& dof = skeleton.joint(j).dof;
        for (std::size_t a = 0; a < 3; ++a) {
            double& angle = pose.joint_angles[j][static_cast<Eigen::Index>(a)];
            if (a >= dof.size()) {
                angle = 0.0;
                continue;
            }
            const double c = std::clamp(angle, dof[a].min_angle, dof[a].max_angle);
            if (c != angle) {
                ++clamped;
                angle = c;
            }
        }
    }
    if (clamped > 0) {
        std::ostringstream msg;
        msg << "clamped " << clamped << " joint angle(s) to their dof limits";
        log_warning(msg.str());
    }
    return clamped;
}

std::optional<HipFrame> hip_frame(const Vec3& root_position, const Mat3& root_rotation) {
    Vec3 fwd = root_rotation * Vec3::UnitZ();
    fwd.y() = 0.0;
    const double n = fwd.norm();
    if (n < 1e-6) return std::nullopt;
    fwd /= n;
    // Yaw about +y taking fwd onto +z.
    const double angle = -std::atan2(fwd.x(), fwd.z());
    HipFrame f;
    f.origin = root_position;
    f.yaw = axis_rotation(Axis::Y, angle);
    return f;
}

MotionClip normalize_clip(const MotionClip& clip) {
    if (clip.frames.empty()) throw StructuralError("normalize_clip: empty clip");
    MotionClip out = clip;
    std::optional<HipFrame> previous;
    for (std::size_t f = 0; f < out.frames.size(); ++f) {
        auto& fr = out.frames[f];
        auto hf = hip_frame(fr.primary.root_position, fr.primary.root_rotation);
        if (!hf) {
            if (!previous) throw DegenerateError("normalize_clip: first frame has a vertical facing axis");
            hf = HipFrame{fr.primary.root_position, previous->yaw};
        }
        fr.primary.root_position = Vec3::Zero();
        fr.primary.root_rotation = hf->yaw * fr.primary.root_rotation;
        fr.robot_ee_position = hf->to_local(fr.robot_ee_position);
        fr.robot_ee_rotation = hf->yaw * fr.robot_ee_rotation;
        previous = hf;
    }
    return out;
}

}  // namespace handover
