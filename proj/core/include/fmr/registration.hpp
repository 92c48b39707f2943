#pragma once

#include <Eigen/Core>
#include <vector>

#include "fmr/cloud.hpp"
#include "fmr/model.hpp"
#include "fmr/se3.hpp"

namespace fmr {

/// Feature-metric solver knobs. Defaults follow the method's reference
/// settings: 10 iterations, forward-difference perturbation 2e-2.
struct RegistrationConfig {
  int max_iterations = 10;
  double perturbation_xi = 0.02;
  double step_tolerance = 1e-7;   // early stop on ||delta theta||
  double damping_lambda = 0.0;    // escalated on singular normal equations
  bool recompute_jacobian = false;  // per-iteration source-side Jacobian
};

/// Classical point-to-point ICP baseline knobs.
struct IcpConfig {
  int max_iterations = 50;
  double step_tolerance = 1e-9;       // stop on transform increment
  double mse_change_tolerance = 1e-12;  // stop on residual stagnation
};

/// Outcome shared by both solvers. residual_history has one entry per
/// iterate including the initial one (length iterations_run + 1);
/// iterate_history holds the matching transforms.
struct RegistrationResult {
  RigidTransform g_est;
  double r_est = 0.0;
  std::vector<double> residual_history;
  std::vector<RigidTransform> iterate_history;
  int iterations_run = 0;
  bool converged = false;
};

/// Gauss-Newton residual F(P) - F(g Q); the reported scalar error is its
/// squared norm.
FeatureVector feature_residual(const PointCloud& p, const PointCloud& q,
                               const RigidTransform& g,
                               const ModelParams& params);

/// Forward-difference Jacobian of the feature w.r.t. the six twist
/// coordinates, evaluated on the target cloud so it can be computed once per
/// registration: column i = (F(exp(xi e_i) P) - F(P)) / xi.
Eigen::MatrixXd fd_jacobian(const PointCloud& p, const ModelParams& params,
                            double xi);

/// Solves the damped 6x6 normal equations (J^T J + lambda I) dtheta = J^T r.
/// On factorization failure lambda escalates by 10x up to 1e3 times the mean
/// diagonal of J^T J; past that SingularNormalEquations is thrown.
Twist gn_step(const Eigen::MatrixXd& jacobian, const FeatureVector& residual,
              double lambda);

/// Feature-metric registration of source Q onto target P by inverse
/// compositional Gauss-Newton. Expects both clouds unit-box normalized;
/// never mutates its inputs.
RegistrationResult register_clouds(const PointCloud& p, const PointCloud& q,
                                   const ModelParams& params,
                                   const RegistrationConfig& cfg = {});

/// Point-to-point ICP of source Q onto target P: nearest-neighbor
/// correspondences against a kd-tree, closed-form alignment, iterated to
/// tolerance. residual_history records the mean squared correspondence
/// distance, which is non-increasing.
RegistrationResult icp_register(const PointCloud& p, const PointCloud& q,
                                const IcpConfig& cfg = {});

/// Closed-form least-squares rigid alignment of corresponded points
/// (minimizes sum ||g src_i - dst_i||^2); reflections are rejected via sign
/// correction of the smallest singular direction.
RigidTransform kabsch(const std::vector<Eigen::Vector3d>& src,
                      const std::vector<Eigen::Vector3d>& dst);

}  // namespace fmr
