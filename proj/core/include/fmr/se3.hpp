#pragma once

#include <Eigen/Core>

#include "fmr/rng.hpp"

namespace fmr {

/// Tangent-space motion parameters: three rotation parameters (axis-angle
/// scaled, radians) followed by three translation parameters. Ordering is
/// (v1, v2, v3, t1, t2, t3) everywhere a 6-vector appears.
struct Twist {
  Eigen::Vector3d v = Eigen::Vector3d::Zero();  // rotation part
  Eigen::Vector3d t = Eigen::Vector3d::Zero();  // translation part

  Eigen::Matrix<double, 6, 1> vector() const {
    Eigen::Matrix<double, 6, 1> x;
    x << v, t;
    return x;
  }
  static Twist from_vector(const Eigen::Matrix<double, 6, 1>& x) {
    return {x.head<3>(), x.tail<3>()};
  }
  static Twist basis(int i, double scale = 1.0) {
    Eigen::Matrix<double, 6, 1> x = Eigen::Matrix<double, 6, 1>::Zero();
    x[i] = scale;
    return from_vector(x);
  }
};

/// Rigid motion g = (R, t) with R a proper rotation matrix.
struct RigidTransform {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const {
    return R * p + t;
  }

  /// [R | t] as a 3x4 matrix.
  Eigen::Matrix<double, 3, 4> matrix3x4() const {
    Eigen::Matrix<double, 3, 4> m;
    m.block<3, 3>(0, 0) = R;
    m.col(3) = t;
    return m;
  }
};

/// Skew-symmetric cross-product matrix of w.
Eigen::Matrix3d hat(const Eigen::Vector3d& w);

/// Exponential map se(3) -> SE(3) (coupled twist: translation runs through
/// the V matrix). Total function; near-zero rotation uses Taylor expansions.
RigidTransform exp(const Twist& theta);

/// Logarithm map SE(3) -> se(3). Throws AngleNearPi when the rotation angle
/// is within 1e-6 of pi (branch ambiguity).
Twist log(const RigidTransform& g);

RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform inverse(const RigidTransform& g);

/// Geodesic rotation distance ||log(R_est^T R_gt)|| in radians.
double angular_error(const RigidTransform& g_est, const RigidTransform& g_gt);

/// Euclidean distance between the translation vectors.
double translation_error(const RigidTransform& g_est,
                         const RigidTransform& g_gt);

/// Root-mean-square over the 12 entries of the [R | t] difference.
double transform_rmse(const RigidTransform& g_est, const RigidTransform& g_gt);

/// Random rigid motion: rotation axis uniform on the sphere, angle uniform in
/// [0, rot_max]; translation direction uniform, norm uniform in [0, trans_max].
RigidTransform random_transform(double rot_max, double trans_max, Rng& rng);

/// Like random_transform but with the rotation angle fixed instead of sampled.
RigidTransform random_transform_fixed_angle(double angle, double trans_max,
                                            Rng& rng);

}  // namespace fmr
