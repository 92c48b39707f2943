#include "fmr/kdtree.hpp"

#include <algorithm>
#include <limits>

namespace fmr {

KdTree3::KdTree3(const std::vector<Eigen::Vector3d>& points)
    : points_(points) {
  std::vector<int> order(points_.size());
  for (int i = 0; i < static_cast<int>(order.size()); ++i) order[i] = i;
  nodes_.reserve(points_.size());
  if (!order.empty()) root_ = build(0, static_cast<int>(order.size()), order);
}

int KdTree3::build(int begin, int end, std::vector<int>& order) {
  // Split on the widest axis at the median.
  Eigen::Vector3d lo = points_[order[begin]];
  Eigen::Vector3d hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order[i]]);
    hi = hi.cwiseMax(points_[order[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);

  const int mid = begin + (end - begin) / 2;
  std::nth_element(order.begin() + begin, order.begin() + mid,
                   order.begin() + end, [&](int a, int b) {
                     return points_[a][axis] < points_[b][axis];
                   });

  const int node_id = static_cast<int>(nodes_.size());
  nodes_.push_back({order[mid], axis, -1, -1});
  if (begin < mid) nodes_[node_id].left = build(begin, mid, order);
  if (mid + 1 < end) nodes_[node_id].right = build(mid + 1, end, order);
  return node_id;
}

KdTree3::Hit KdTree3::nearest(const Eigen::Vector3d& query) const {
  Hit best{-1, std::numeric_limits<double>::infinity()};
  if (root_ >= 0) search(root_, query, best);
  return best;
}

void KdTree3::search(int node_id, const Eigen::Vector3d& query,
                     Hit& best) const {
  const Node& node = nodes_[node_id];
  const double d = (points_[node.point] - query).squaredNorm();
  if (d < best.sq_dist) best = {node.point, d};

  const double delta = query[node.axis] - points_[node.point][node.axis];
  const int near = delta < 0.0 ? node.left : node.right;
  const int far = delta < 0.0 ? node.right : node.left;
  if (near >= 0) search(near, query, best);
  if (far >= 0 && delta * delta < best.sq_dist) search(far, query, best);
}

}  // namespace fmr
