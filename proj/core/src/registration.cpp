#include "fmr/registration.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "fmr/errors.hpp"
#include "fmr/kdtree.hpp"

namespace fmr {

namespace {

void check_registrable(const PointCloud& cloud, const char* which) {
  if (cloud.size() < 2) {
    throw DegenerateCloud(std::string(which) + " cloud has fewer than 2 points");
  }
  Eigen::Vector3d lo = cloud.points.front(), hi = cloud.points.front();
  for (const auto& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  if ((hi - lo).maxCoeff() <= 0.0) {
    throw DegenerateCloud(std::string(which) + " cloud has zero extent");
  }
}

Eigen::MatrixXd jacobian_with_base(const PointCloud& p,
                                   const ModelParams& params, double xi,
                                   const FeatureVector& base) {
  Eigen::MatrixXd j(base.size(), 6);
  for (int i = 0; i < 6; ++i) {
    const RigidTransform perturb = exp(Twist::basis(i, xi));
    const FeatureVector f = encode(apply(perturb, p), params);
    j.col(i) = (f - base) / xi;
  }
  return j;
}

}  // namespace

FeatureVector feature_residual(const PointCloud& p, const PointCloud& q,
                               const RigidTransform& g,
                               const ModelParams& params) {
  return encode(p, params) - encode(apply(g, q), params);
}

Eigen::MatrixXd fd_jacobian(const PointCloud& p, const ModelParams& params,
                            double xi) {
  if (xi <= 0.0) throw InvalidArgument("perturbation xi must be > 0");
  return jacobian_with_base(p, params, xi, encode(p, params));
}

Twist gn_step(const Eigen::MatrixXd& jacobian, const FeatureVector& residual,
              double lambda) {
  if (!jacobian.allFinite() || !residual.allFinite()) {
    throw SingularNormalEquations("non-finite Jacobian or residual");
  }
  if (lambda < 0.0) throw InvalidArgument("lambda must be >= 0");
  const Eigen::Matrix<double, 6, 6> a =
      jacobian.transpose() * jacobian;
  const Eigen::Matrix<double, 6, 1> b = jacobian.transpose() * residual;
  if (b.isZero(0.0)) return Twist{};  // normal equations solved by zero

  const double mean_diag = a.trace() / 6.0;
  const double lambda_cap = 1e3 * mean_diag;
  double lam = lambda;
  while (true) {
    Eigen::Matrix<double, 6, 6> damped = a;
    damped.diagonal().array() += lam;
    const Eigen::LLT<Eigen::Matrix<double, 6, 6>> llt(damped);
    if (llt.info() == Eigen::Success) {
      const Eigen::Matrix<double, 6, 1> x = llt.solve(b);
      if (x.allFinite()) return Twist::from_vector(x);
    }
    const double next = lam > 0.0 ? lam * 10.0 : 1e-12 * std::max(mean_diag, 1.0);
    if (next > lambda_cap || !(next > lam)) {
      throw SingularNormalEquations(
          "normal equations unsolvable after damping escalation");
    }
    lam = next;
  }
}

RegistrationResult register_clouds(const PointCloud& p, const PointCloud& q,
                                   const ModelParams& params,
                                   const RegistrationConfig& cfg) {
  if (cfg.max_iterations < 1) {
    throw InvalidArgument("max_iterations must be >= 1");
  }
  if (cfg.perturbation_xi <= 0.0) {
    throw InvalidArgument("perturbation_xi must be > 0");
  }
  check_registrable(p, "target");
  check_registrable(q, "source");

  const FeatureVector f_target = encode(p, params);
  // Target-side Jacobian, computed once and reused every iteration; this is
  // what makes the inverse compositional loop cheap.
  Eigen::MatrixXd j =
      jacobian_with_base(p, params, cfg.perturbation_xi, f_target);

  RegistrationResult result;
  RigidTransform g;  // identity init
  FeatureVector residual = f_target - encode(apply(g, q), params);
  result.residual_history.push_back(residual.squaredNorm());
  result.iterate_history.push_back(g);

  for (int k = 0; k < cfg.max_iterations; ++k) {
    if (cfg.recompute_jacobian && k > 0) {
      // Ablation path: forward-compositional Jacobian on the warped source.
      const PointCloud warped = apply(g, q);
      j = jacobian_with_base(warped, params, cfg.perturbation_xi,
                             encode(warped, params));
    }
    const Twist delta = gn_step(j, residual, cfg.damping_lambda);
    g = compose(exp(delta), g);
    residual = f_target - encode(apply(g, q), params);
    result.residual_history.push_back(residual.squaredNorm());
    result.iterate_history.push_back(g);
    result.iterations_run = k + 1;
    if (delta.vector().norm() < cfg.step_tolerance) {
      result.converged = true;
      break;
    }
  }
  result.g_est = g;
  result.r_est = result.residual_history.back();
  return result;
}

RigidTransform kabsch(const std::vector<Eigen::Vector3d>& src,
                      const std::vector<Eigen::Vector3d>& dst) {
  if (src.size() != dst.size()) {
    throw InvalidArgument("kabsch: point counts differ");
  }
  const int n = static_cast<int>(src.size());
  if (n < 3) throw DegenerateConfiguration("kabsch needs at least 3 points");

  Eigen::Vector3d c_src = Eigen::Vector3d::Zero();
  Eigen::Vector3d c_dst = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    c_src += src[i];
    c_dst += dst[i];
  }
  c_src /= n;
  c_dst /= n;

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (int i = 0; i < n; ++i) {
    h += (src[i] - c_src) * (dst[i] - c_dst).transpose();
  }
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  // Collinear or coincident correspondences leave the rotation about the
  // dominant axis unconstrained.
  if (sv(0) <= 0.0 || sv(1) <= 1e-12 * sv(0)) {
    throw DegenerateConfiguration(
        "kabsch: correspondences are collinear or coincident");
  }
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0)
                ? -1.0
                : 1.0;
  RigidTransform g;
  g.R = svd.matrixV() * d * svd.matrixU().transpose();
  g.t = c_dst - g.R * c_src;
  return g;
}

RegistrationResult icp_register(const PointCloud& p, const PointCloud& q,
                                const IcpConfig& cfg) {
  check_registrable(p, "target");
  check_registrable(q, "source");
  if (q.size() < 3) {
    throw DegenerateCloud("icp source needs at least 3 points");
  }

  const KdTree3 tree(p.points);
  RegistrationResult result;
  RigidTransform g;

  auto correspondences = [&](const PointCloud& warped, double* mse,
                             std::vector<Eigen::Vector3d>& matched) {
    double sum = 0.0;
    matched.resize(warped.points.size());
    for (size_t i = 0; i < warped.points.size(); ++i) {
      const auto hit = tree.nearest(warped.points[i]);
      matched[i] = p.points[hit.index];
      sum += hit.sq_dist;
    }
    *mse = sum / static_cast<double>(warped.points.size());
  };

  PointCloud warped = q;
  std::vector<Eigen::Vector3d> matched;
  double mse = 0.0;
  correspondences(warped, &mse, matched);
  result.residual_history.push_back(mse);
  result.iterate_history.push_back(g);

  for (int k = 0; k < cfg.max_iterations; ++k) {
    const RigidTransform incr = kabsch(warped.points, matched);
    g = compose(incr, g);
    warped = apply(g, q);
    const double prev = mse;
    correspondences(warped, &mse, matched);
    result.residual_history.push_back(mse);
    result.iterate_history.push_back(g);
    result.iterations_run = k + 1;
    // Increment size without log(): rotation angle via the trace formula
    // (no branch-cut throw) plus the translation norm.
    const double cos_angle =
        std::clamp((incr.R.trace() - 1.0) * 0.5, -1.0, 1.0);
    const double step = std::acos(cos_angle) + incr.t.norm();
    if (step < cfg.step_tolerance ||
        std::abs(prev - mse) < cfg.mse_change_tolerance) {
      result.converged = true;
      break;
    }
  }
  result.g_est = g;
  result.r_est = result.residual_history.back();
  return result;
}

}  // namespace fmr
