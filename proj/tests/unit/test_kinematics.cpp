#include <doctest.h>

#include <random>

#include "handover/error.hpp"
#include "handover/kinematics.hpp"
#include "handover/motion.hpp"
#include "handover/synth.hpp"
#include "oracles.hpp"

using namespace handover;

namespace {

Skeleton chain3() {
    const double pi = 3.14159265358979323846;
    return Skeleton({{"root", -1, Vec3::Zero(), {}},
                     {"mid", 0, Vec3(0.0, 0.5, 0.0), {{Axis::Z, -pi, pi}, {Axis::X, -pi, pi}, {Axis::Y, -pi, pi}}},
                     {"tip", 1, Vec3(0.3, 0.2, -0.1), {{Axis::X, -pi, pi}}}});
}

}  // namespace

TEST_SUITE("kinematics") {
    TEST_CASE("two-joint chain at rest") {
        Skeleton s({{"a", -1, Vec3::Zero(), {}}, {"b", 0, Vec3(1, 0, 0), {}}});
        const auto p = forward_kinematics(s, Pose::rest(s));
        CHECK((p[0] - Vec3::Zero()).norm() < 1e-12);
        CHECK((p[1] - Vec3(1, 0, 0)).norm() < 1e-12);
    }

    TEST_CASE("root rotated 90 degrees about z moves the child to +y") {
        Skeleton s({{"a", -1, Vec3::Zero(), {}}, {"b", 0, Vec3(1, 0, 0), {}}});
        Pose pose = Pose::rest(s);
        pose.root_rotation = oracle::rot_z(std::acos(0.0));
        const auto p = forward_kinematics(s, pose);
        CHECK((p[1] - Vec3(0, 1, 0)).norm() < 1e-12);
    }

    TEST_CASE("mixed three-joint chain matches the matrix-chain oracle") {
        const Skeleton s = chain3();
        Pose pose = Pose::rest(s);
        pose.root_position = Vec3(0.1, 0.9, -0.3);
        pose.root_rotation = oracle::rot_y(0.4) * oracle::rot_x(-0.2);
        pose.joint_angles[1] = Vec3(0.3, -0.7, 1.1);
        pose.joint_angles[2] = Vec3(0.8, 0.0, 0.0);
        const std::vector<Eigen::Matrix3d> local{pose.root_rotation,
                                                 oracle::rot_z(0.3) * oracle::rot_x(-0.7) * oracle::rot_y(1.1),
                                                 oracle::rot_x(0.8)};
        const auto expect = oracle::chain_positions(pose.root_position, local,
                                                    {Vec3::Zero(), Vec3(0.0, 0.5, 0.0), Vec3(0.3, 0.2, -0.1)});
        const auto got = forward_kinematics(s, pose);
        for (std::size_t j = 0; j < 3; ++j) CHECK((got[j] - expect[j]).norm() < 1e-9);
    }

    TEST_CASE("joint-count mismatch is a structural error") {
        const Skeleton s = chain3();
        Pose pose = Pose::rest(s);
        pose.joint_angles.pop_back();
        CHECK_THROWS_AS(forward_kinematics(s, pose), StructuralError);
    }

    TEST_CASE("FK preserves bone lengths on random poses") {
        const Skeleton s = Skeleton::synthetic_body();
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int trial = 0; trial < 50; ++trial) {
            Pose pose = Pose::rest(s);
            pose.root_rotation = oracle::random_rotation(rng);
            pose.root_position = Vec3(u(rng), u(rng), u(rng));
            for (auto& a : pose.joint_angles) a = Vec3(u(rng), u(rng), u(rng));
            const auto p = forward_kinematics(s, pose);
            for (std::size_t j = 1; j < s.size(); ++j) {
                const auto parent = static_cast<std::size_t>(s.joint(j).parent);
                CHECK((p[j] - p[parent]).norm() == doctest::Approx(s.joint(j).offset.norm()).epsilon(1e-9));
            }
        }
    }

    TEST_CASE("skeleton validation") {
        CHECK_THROWS_AS(Skeleton({{"a", -1, Vec3::Zero(), {}}, {"b", -1, Vec3::Zero(), {}}}), StructuralError);
        CHECK_THROWS_AS(Skeleton({{"a", -1, Vec3::Zero(), {}}, {"b", 2, Vec3::Zero(), {}}, {"c", 0, Vec3::Zero(), {}}}),
                        StructuralError);
        CHECK_THROWS_AS(Skeleton({{"a", -1, Vec3::Zero(), {{Axis::X, 1.0, -1.0}}}}), ValidationError);
        const Skeleton body = Skeleton::synthetic_body();
        CHECK(body.size() == 17);
        CHECK(body.index_of("Hips") == 0);
        CHECK_THROWS_AS(body.index_of("Tail"), LookupError);
    }

    TEST_CASE("matrix_to_6d known cases") {
        const Rotation6D id = matrix_to_6d(Mat3::Identity());
        Vec6 e;
        e << 1, 0, 0, 0, 1, 0;
        CHECK((id.v - e).norm() < 1e-12);
        const Rotation6D z = matrix_to_6d(oracle::rot_z(std::acos(0.0)));
        e << 0, 1, 0, -1, 0, 0;
        CHECK((z.v - e).norm() < 1e-12);
        Mat3 bad = Mat3::Identity();
        bad(0, 0) = 1.1;
        CHECK_THROWS_AS(matrix_to_6d(bad), ValidationError);
    }

    TEST_CASE("sixd_to_matrix Gram-Schmidt cases") {
        Vec6 v;
        v << 2, 0, 0, 0, 3, 0;
        CHECK((sixd_to_matrix(v) - Mat3::Identity()).norm() < 1e-12);
        v << 1, 0, 0, 1, 1, 0;
        CHECK((sixd_to_matrix(v) - Mat3::Identity()).norm() < 1e-12);
        v << 0, 0, 0, 0, 1, 0;
        CHECK_THROWS_AS(sixd_to_matrix(v), DegenerateError);
        v << 1, 0, 0, 2, 0, 0;
        CHECK_THROWS_AS(sixd_to_matrix(v), DegenerateError);
    }

    TEST_CASE("6D round trip over 1000 random rotations") {
        std::mt19937_64 rng(42);
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const Mat3 r = oracle::random_rotation(rng);
            worst = std::max(worst, (sixd_to_matrix(matrix_to_6d(r)) - r).norm());
        }
        CHECK(worst < 1e-6);
    }

    TEST_CASE("decoded 6D vectors are proper rotations") {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> n(0.0, 1.0);
        for (int i = 0; i < 200; ++i) {
            Vec6 v;
            for (int k = 0; k < 6; ++k) v(k) = n(rng);
            const Mat3 r = sixd_to_matrix(v);
            CHECK((r.transpose() * r - Mat3::Identity()).norm() < 1e-9);
            CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-9));
            CHECK((sixd_to_matrix(matrix_to_6d(r)) - r).norm() < 1e-9);
        }
    }

    TEST_CASE("euler decomposition inverts composition for every order") {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> u(-1.2, 1.2);
        const std::array<std::array<Axis, 3>, 6> orders{{{Axis::X, Axis::Y, Axis::Z},
                                                         {Axis::X, Axis::Z, Axis::Y},
                                                         {Axis::Y, Axis::X, Axis::Z},
                                                         {Axis::Y, Axis::Z, Axis::X},
                                                         {Axis::Z, Axis::X, Axis::Y},
                                                         {Axis::Z, Axis::Y, Axis::X}}};
        for (const auto& order : orders)
            for (int i = 0; i < 50; ++i) {
                const Vec3 a(u(rng), u(rng), u(rng));
                const Mat3 r = euler_to_matrix(order, a);
                CHECK((matrix_to_euler(order, r) - a).norm() < 1e-9);
            }
    }

    TEST_CASE("validate_pose clamps out-of-limit angles") {
        Skeleton s({{"a", -1, Vec3::Zero(), {}}, {"b", 0, Vec3(1, 0, 0), {{Axis::X, -0.5, 0.5}}}});
        Pose pose = Pose::rest(s);
        pose.joint_angles[1] = Vec3(0.9, 0, 0);
        CHECK(validate_pose(s, pose) == 1);
        CHECK(pose.joint_angles[1].x() == doctest::Approx(0.5));
        pose.root_rotation(0, 0) = 2.0;
        CHECK_THROWS_AS(validate_pose(s, pose), ValidationError);
    }
}

TEST_SUITE("kinematics") {
    TEST_CASE("normalize_clip translates an unrotated hip to the origin") {
        auto s = std::make_shared<const Skeleton>(Skeleton::synthetic_body());
        MotionClip clip;
        clip.skeleton = s;
        Frame f;
        f.primary = Pose::rest(*s);
        f.primary.root_position = Vec3(2, 0, 1);
        f.robot_ee_position = Vec3(2.5, 1.0, 1.5);
        clip.frames.push_back(f);
        clip.annotations.resize(1);
        const MotionClip n = normalize_clip(clip);
        const auto before = forward_kinematics(*s, clip.frames[0].primary);
        const auto after = forward_kinematics(*s, n.frames[0].primary);
        for (std::size_t j = 0; j < before.size(); ++j)
            CHECK((after[j] - (before[j] - Vec3(2, 0, 1))).norm() < 1e-12);
        CHECK((n.frames[0].robot_ee_position - Vec3(0.5, 1.0, 0.5)).norm() < 1e-12);
    }

    TEST_CASE("normalize_clip is idempotent and preserves hand-to-effector distance") {
        SynthConfig cfg;
        ClipSpec spec;
        spec.activity = Activity::HammerNail;
        const MotionClip clip = synth_clip(cfg, spec, 5).clip;
        const MotionClip once = normalize_clip(clip);
        const MotionClip twice = normalize_clip(once);
        const auto& s = *clip.skeleton;
        const std::size_t hand = s.index_of("RightHand");
        for (std::size_t f = 0; f < clip.size(); f += 7) {
            const auto p0 = forward_kinematics(s, clip.frames[f].primary);
            const auto p1 = forward_kinematics(s, once.frames[f].primary);
            const auto p2 = forward_kinematics(s, twice.frames[f].primary);
            CHECK((p1[0]).norm() < 1e-9);
            for (std::size_t j = 0; j < p1.size(); ++j) CHECK((p2[j] - p1[j]).norm() < 1e-9);
            CHECK((p0[hand] - clip.frames[f].robot_ee_position).norm() ==
                  doctest::Approx((p1[hand] - once.frames[f].robot_ee_position).norm()).epsilon(1e-9));
            CHECK((p0[3] - p0[hand]).norm() == doctest::Approx((p1[3] - p1[hand]).norm()).epsilon(1e-9));
        }
    }

    TEST_CASE("normalized facing is +z") {
        const double yaw = 0.9;
        const auto hf = hip_frame(Vec3(1, 0.9, 2), oracle::rot_y(yaw));
        REQUIRE(hf.has_value());
        const Vec3 forward_world = oracle::rot_y(yaw) * Vec3(0, 0, 1);
        CHECK((hf->yaw * forward_world - kCanonicalForward).norm() < 1e-12);
        CHECK_FALSE(hip_frame(Vec3::Zero(), oracle::rot_x(std::acos(0.0))).has_value());
    }
}
