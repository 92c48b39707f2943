#include "fmr/se3.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fmr/errors.hpp"

namespace fmr {

namespace {

constexpr double kTaylorEps = 1e-8;   // switch to series below this angle
constexpr double kPiMargin = 1e-6;    // log branch guard around pi

// Rodrigues coefficients sin(x)/x, (1-cos x)/x^2, (x-sin x)/x^3 with
// second-order Taylor fallbacks so exp stays smooth through zero.
struct RotCoeffs {
  double a;  // sin(x)/x
  double b;  // (1-cos(x))/x^2
  double c;  // (x-sin(x))/x^3
};

RotCoeffs rot_coeffs(double angle) {
  const double x2 = angle * angle;
  if (angle < kTaylorEps) {
    return {1.0 - x2 / 6.0, 0.5 - x2 / 24.0, 1.0 / 6.0 - x2 / 120.0};
  }
  const double s = std::sin(angle);
  const double c = std::cos(angle);
  return {s / angle, (1.0 - c) / x2, (angle - s) / (x2 * angle)};
}

}  // namespace

Eigen::Matrix3d hat(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0.0, -w.z(), w.y(),  //
      w.z(), 0.0, -w.x(),   //
      -w.y(), w.x(), 0.0;
  return m;
}

RigidTransform exp(const Twist& theta) {
  const double angle = theta.v.norm();
  const auto [a, b, c] = rot_coeffs(angle);
  const Eigen::Matrix3d W = hat(theta.v);
  const Eigen::Matrix3d W2 = W * W;
  RigidTransform g;
  g.R = Eigen::Matrix3d::Identity() + a * W + b * W2;
  const Eigen::Matrix3d V = Eigen::Matrix3d::Identity() + b * W + c * W2;
  g.t = V * theta.t;
  return g;
}

Twist log(const RigidTransform& g) {
  const double cos_angle =
      std::clamp((g.R.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double angle = std::acos(cos_angle);
  if (angle > std::numbers::pi - kPiMargin) {
    throw AngleNearPi("rotation angle within 1e-6 of pi; logarithm branch "
                      "is ambiguous");
  }

  Twist theta;
  const Eigen::Vector3d axis_scaled{g.R(2, 1) - g.R(1, 2),
                                    g.R(0, 2) - g.R(2, 0),
                                    g.R(1, 0) - g.R(0, 1)};
  if (angle < kTaylorEps) {
    // R - R^T = 2 sin(angle) [axis]x; sin(x)/x ~ 1 here.
    theta.v = 0.5 * axis_scaled;
  } else {
    theta.v = angle / (2.0 * std::sin(angle)) * axis_scaled;
  }

  const Eigen::Matrix3d W = hat(theta.v);
  const Eigen::Matrix3d W2 = W * W;
  Eigen::Matrix3d v_inv;
  if (angle < kTaylorEps) {
    v_inv = Eigen::Matrix3d::Identity() - 0.5 * W + (1.0 / 12.0) * W2;
  } else {
    const double k =
        (1.0 - angle / (2.0 * std::tan(angle * 0.5))) / (angle * angle);
    v_inv = Eigen::Matrix3d::Identity() - 0.5 * W + k * W2;
  }
  theta.t = v_inv * g.t;
  return theta;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.R * b.R, a.R * b.t + a.t};
}

RigidTransform inverse(const RigidTransform& g) {
  RigidTransform inv;
  inv.R = g.R.transpose();
  inv.t = -(inv.R * g.t);
  return inv;
}

double angular_error(const RigidTransform& g_est, const RigidTransform& g_gt) {
  RigidTransform rel;
  rel.R = g_est.R.transpose() * g_gt.R;
  return log(rel).v.norm();
}

double translation_error(const RigidTransform& g_est,
                         const RigidTransform& g_gt) {
  return (g_est.t - g_gt.t).norm();
}

double transform_rmse(const RigidTransform& g_est,
                      const RigidTransform& g_gt) {
  const Eigen::Matrix<double, 3, 4> d =
      g_est.matrix3x4() - g_gt.matrix3x4();
  return std::sqrt(d.squaredNorm() / 12.0);
}

RigidTransform random_transform(double rot_max, double trans_max, Rng& rng) {
  const Eigen::Vector3d axis = rng.unit_vector();
  const double angle = rng.uniform(0.0, rot_max);
  const Eigen::Vector3d dir = rng.unit_vector();
  const double dist = rng.uniform(0.0, trans_max);
  RigidTransform g = exp(Twist{axis * angle, Eigen::Vector3d::Zero()});
  g.t = dir * dist;
  return g;
}

RigidTransform random_transform_fixed_angle(double angle, double trans_max,
                                            Rng& rng) {
  const Eigen::Vector3d axis = rng.unit_vector();
  const Eigen::Vector3d dir = rng.unit_vector();
  const double dist = rng.uniform(0.0, trans_max);
  RigidTransform g = exp(Twist{axis * angle, Eigen::Vector3d::Zero()});
  g.t = dir * dist;
  return g;
}

}  // namespace fmr
