#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace handover {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// World convention: +y is up. A normalized pose faces +z with its right-hand
// side towards -x (the usual BVH character frame).
inline const Vec3 kUp{0.0, 1.0, 0.0};
inline const Vec3 kCanonicalForward{0.0, 0.0, 1.0};
inline const Vec3 kCanonicalRight{-1.0, 0.0, 0.0};

enum class Axis { X = 0, Y = 1, Z = 2 };

char axis_name(Axis a);

struct DofAxis {
    Axis axis;
    double min_angle;
    double max_angle;
};

struct JointSpec {
    std::string name;
    int parent = -1;  // -1 marks the root
    Vec3 offset = Vec3::Zero();
    // Rotation order: R_local = R(dof[0]) * R(dof[1]) * R(dof[2]).
    std::vector<DofAxis> dof;
};

class Skeleton {
public:
    Skeleton() = default;
    // Validates the tree; throws StructuralError / ValidationError.
    explicit Skeleton(std::vector<JointSpec> joints);

    const std::vector<JointSpec>& joints() const noexcept { return joints_; }
    const JointSpec& joint(std::size_t i) const { return joints_.at(i); }
    std::size_t size() const noexcept { return joints_.size(); }
    std::size_t dof_count() const noexcept;

    std::optional<std::size_t> find(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;  // throws LookupError

    // The reduced 17-joint body used for synthetic data.
    static Skeleton synthetic_body();

private:
    std::vector<JointSpec> joints_;
};

// One frame of a character. joint_angles[j] holds the angles for joint j's
// dof axes in order; components past the joint's axis count are zero. The
// root joint is oriented by root_rotation, not by joint_angles[0].
struct Pose {
    Vec3 root_position = Vec3::Zero();
    Mat3 root_rotation = Mat3::Identity();
    std::vector<Vec3> joint_angles;

    static Pose rest(const Skeleton& skeleton);
};

struct Rotation6D {
    Vec6 v = Vec6::Zero();
};

struct FkResult {
    std::vector<Vec3> positions;
    std::vector<Mat3> rotations;  // global orientation of each joint frame
};

Mat3 axis_rotation(Axis axis, double angle);
Mat3 euler_to_matrix(const std::vector<DofAxis>& dof, const Vec3& angles);
Mat3 euler_to_matrix(const std::array<Axis, 3>& order, const Vec3& angles);
// Tait-Bryan decomposition for any permutation of three distinct axes.
Vec3 matrix_to_euler(const std::array<Axis, 3>& order, const Mat3& r);
// Angles on a joint's own dof axes. Missing axes are appended to complete a
// three-axis order; their angles are dropped, so the decomposition is exact
// whenever r is reachable with the joint's axes.
Vec3 matrix_to_joint_angles(const std::vector<DofAxis>& dof, const Mat3& r);

bool is_rotation(const Mat3& r, double tolerance);

// Local rotation of joint j (root_rotation for the root).
Mat3 local_rotation(const Skeleton& skeleton, const Pose& pose, std::size_t j);

FkResult forward_kinematics_full(const Skeleton& skeleton, const Pose& pose);
std::vector<Vec3> forward_kinematics(const Skeleton& skeleton, const Pose& pose);

Rotation6D matrix_to_6d(const Mat3& r);
Mat3 sixd_to_matrix(const Rotation6D& r6);
Mat3 sixd_to_matrix(const Vec6& v);

// Throws StructuralError on joint-count mismatch and ValidationError on a
// non-orthonormal root rotation. Out-of-limit angles are clamped in place
// and a warning is logged; returns the number of clamped angles.
std::size_t validate_pose(const Skeleton& skeleton, Pose& pose);

struct MotionClip;

// Rigid transform (yaw about +y, then translation) that puts the hip at the
// origin facing +z. Exposed so callers can map positions between the world
// and the normalized frame.
struct HipFrame {
    Vec3 origin = Vec3::Zero();
    Mat3 yaw = Mat3::Identity();  // world -> normalized rotation

    Vec3 to_local(const Vec3& world) const { return yaw * (world - origin); }
    Vec3 to_world(const Vec3& local) const { return yaw.transpose() * local + origin; }
    Mat3 to_local(const Mat3& world_rot) const { return yaw * world_rot; }
};

// Facing is the hip frame's +z projected onto the horizontal plane. Returns
// nullopt when that projection is shorter than 1e-6.
std::optional<HipFrame> hip_frame(const Vec3& root_position, const Mat3& root_rotation);

MotionClip normalize_clip(const MotionClip& clip);

}  // namespace handover
