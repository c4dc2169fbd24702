#pragma once

// Test-side reference computations. Written against textbook formulas
// only; nothing here calls into the library under test.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace oracle {

inline Eigen::Matrix3d rot_x(double a) {
    Eigen::Matrix3d r;
    r << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
    return r;
}

inline Eigen::Matrix3d rot_y(double a) {
    Eigen::Matrix3d r;
    r << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
    return r;
}

inline Eigen::Matrix3d rot_z(double a) {
    Eigen::Matrix3d r;
    r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
    return r;
}

// Uniform rotation from a normalized Gaussian quaternion.
inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    return q.toRotationMatrix();
}

// Serial chain: world position of each joint given per-joint local
// rotations (root rotation first) and offsets (root offset ignored).
inline std::vector<Eigen::Vector3d> chain_positions(const Eigen::Vector3d& root,
                                                    const std::vector<Eigen::Matrix3d>& local,
                                                    const std::vector<Eigen::Vector3d>& offsets) {
    std::vector<Eigen::Vector3d> out{root};
    Eigen::Matrix3d acc = local[0];
    for (std::size_t j = 1; j < local.size(); ++j) {
        out.push_back(out.back() + acc * offsets[j]);
        acc = acc * local[j];
    }
    return out;
}

inline double kl_diag_standard(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i)
        s += 0.5 * (std::exp(log_var(i)) + mu(i) * mu(i) - 1.0 - log_var(i));
    return s;
}

}  // namespace oracle
