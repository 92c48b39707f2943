#include "fmr/losses.hpp"

#include <Eigen/Geometry>
#include <vector>

#include "fmr/errors.hpp"
#include "fmr/kdtree.hpp"

namespace fmr {

namespace {

// Nearest index in `tree` for every point of `from`, in input order.
std::vector<KdTree3::Hit> all_nearest(const PointCloud& from,
                                      const KdTree3& tree) {
  std::vector<KdTree3::Hit> hits;
  hits.reserve(from.points.size());
  for (const auto& p : from.points) hits.push_back(tree.nearest(p));
  return hits;
}

}  // namespace

double chamfer(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) {
    throw InvalidArgument("chamfer: clouds must be nonempty");
  }
  const KdTree3 tree_a(a.points);
  const KdTree3 tree_b(b.points);
  double sum_ab = 0.0;
  for (const auto& p : a.points) sum_ab += tree_b.nearest(p).sq_dist;
  double sum_ba = 0.0;
  for (const auto& p : b.points) sum_ba += tree_a.nearest(p).sq_dist;
  return sum_ab / a.size() + sum_ba / b.size();
}

ChamferGrads chamfer_backward(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) {
    throw InvalidArgument("chamfer_backward: clouds must be nonempty");
  }
  const KdTree3 tree_a(a.points);
  const KdTree3 tree_b(b.points);
  const auto near_b = all_nearest(a, tree_b);  // per a-point match in B
  const auto near_a = all_nearest(b, tree_a);  // per b-point match in A

  ChamferGrads g;
  g.d_a = Eigen::MatrixXd::Zero(a.size(), 3);
  g.d_b = Eigen::MatrixXd::Zero(b.size(), 3);
  const double wa = 2.0 / a.size();
  const double wb = 2.0 / b.size();
  for (int i = 0; i < a.size(); ++i) {
    const Eigen::Vector3d diff = a.points[i] - b.points[near_b[i].index];
    g.d_a.row(i) += wa * diff.transpose();
    g.d_b.row(near_b[i].index) -= wa * diff.transpose();
  }
  for (int j = 0; j < b.size(); ++j) {
    const Eigen::Vector3d diff = b.points[j] - a.points[near_a[j].index];
    g.d_b.row(j) += wb * diff.transpose();
    g.d_a.row(near_a[j].index) -= wb * diff.transpose();
  }
  return g;
}

double point_error_loss(const RigidTransform& g_est,
                        const RigidTransform& g_gt, const PointCloud& cloud) {
  if (cloud.empty()) throw InvalidArgument("point_error_loss: empty cloud");
  double sum = 0.0;
  for (const auto& p : cloud.points) {
    sum += (g_est * p - g_gt * p).squaredNorm();
  }
  return sum / cloud.size();
}

Twist point_error_loss_grad(const RigidTransform& g_est,
                            const RigidTransform& g_gt,
                            const PointCloud& cloud) {
  if (cloud.empty()) throw InvalidArgument("point_error_loss: empty cloud");
  // First-order motion of x = g_est p under exp(delta): dx = delta_v x x + delta_t.
  Eigen::Vector3d grad_v = Eigen::Vector3d::Zero();
  Eigen::Vector3d grad_t = Eigen::Vector3d::Zero();
  for (const auto& p : cloud.points) {
    const Eigen::Vector3d x = g_est * p;
    const Eigen::Vector3d e = x - g_gt * p;
    grad_v += x.cross(e);
    grad_t += e;
  }
  const double w = 2.0 / cloud.size();
  return Twist{w * grad_v, w * grad_t};
}

LossValue combined_loss(TrainMode mode, double chamfer_term,
                        std::optional<double> pe_term) {
  if (mode == TrainMode::Semi && !pe_term.has_value()) {
    throw ModeMismatch("semi-supervised loss requires a point-error term");
  }
  if (mode == TrainMode::Unsupervised && pe_term.has_value()) {
    throw ModeMismatch("unsupervised loss must not carry a point-error term");
  }
  LossValue v;
  v.chamfer = chamfer_term;
  v.point_error = pe_term.value_or(0.0);
  v.total = v.chamfer + v.point_error;
  return v;
}

}  // namespace fmr
