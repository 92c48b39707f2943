#pragma once

#include <Eigen/Core>
#include <vector>

namespace fmr {

/// Static 3-d kd-tree over a point array. Nearest-neighbor queries return the
/// exact minimum of the same squared-distance expression a linear scan would
/// evaluate, so accelerated and brute-force paths agree bit for bit on the
/// distance value.
class KdTree3 {
 public:
  explicit KdTree3(const std::vector<Eigen::Vector3d>& points);

  struct Hit {
    int index = -1;
    double sq_dist = 0.0;
  };

  /// Index of and squared distance to the nearest stored point.
  Hit nearest(const Eigen::Vector3d& query) const;

  int size() const { return static_cast<int>(points_.size()); }

 private:
  struct Node {
    int point = -1;   // index into points_
    int axis = 0;
    int left = -1;    // node indices, -1 = leaf edge
    int right = -1;
  };

  int build(int begin, int end, std::vector<int>& order);
  void search(int node, const Eigen::Vector3d& query, Hit& best) const;

  std::vector<Eigen::Vector3d> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace fmr
