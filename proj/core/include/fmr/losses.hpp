#pragma once

#include <Eigen/Core>
#include <optional>

#include "fmr/cloud.hpp"
#include "fmr/se3.hpp"

namespace fmr {

/// Symmetric set-to-set Chamfer distance: mean over A of the squared nearest
/// distance into B, plus the same with the roles swapped. Means (not sums)
/// keep the value comparable across point counts.
double chamfer(const PointCloud& a, const PointCloud& b);

/// Gradients of chamfer w.r.t. both clouds through the nearest-neighbor
/// assignments fixed at the forward pass. Rows are points.
struct ChamferGrads {
  Eigen::MatrixXd d_a;
  Eigen::MatrixXd d_b;
};
ChamferGrads chamfer_backward(const PointCloud& a, const PointCloud& b);

/// Mean squared 3D point error (1/M) sum ||g_est p - g_gt p||^2.
double point_error_loss(const RigidTransform& g_est,
                        const RigidTransform& g_gt, const PointCloud& cloud);

/// Gradient of point_error_loss w.r.t. a left-perturbation twist of g_est:
/// d/d(delta) loss(exp(delta) * g_est, g_gt, P) at delta = 0.
Twist point_error_loss_grad(const RigidTransform& g_est,
                            const RigidTransform& g_gt,
                            const PointCloud& cloud);

enum class TrainMode { Semi, Unsupervised };

/// Per-sample loss breakdown; total follows the training mode.
struct LossValue {
  double total = 0.0;
  double chamfer = 0.0;
  double point_error = 0.0;
};

/// Unit-weight combination: semi adds the point-error term, unsupervised is
/// Chamfer only. Throws ModeMismatch when pe_term presence disagrees with
/// the mode.
LossValue combined_loss(TrainMode mode, double chamfer_term,
                        std::optional<double> pe_term);

}  // namespace fmr
