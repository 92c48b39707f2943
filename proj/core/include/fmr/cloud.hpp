#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "fmr/rng.hpp"
#include "fmr/se3.hpp"

namespace fmr {

/// Ordered list of 3D points. Order is significant for storage and element
/// access only; no numerical result of any operation depends on it.
struct PointCloud {
  std::vector<Eigen::Vector3d> points;

  int size() const { return static_cast<int>(points.size()); }
  bool empty() const { return points.empty(); }

  /// N x 3 row-per-point view of the coordinates.
  Eigen::MatrixXd matrix() const;
  static PointCloud from_matrix(const Eigen::MatrixXd& m);
};

/// Transform every point by g; preserves count and order.
PointCloud apply(const RigidTransform& g, const PointCloud& cloud);

/// Uniform scale + offset applied by normalize_unit_box, kept so results can
/// be mapped back to the input frame: normalized = scale * (p - offset).
struct RigidScaleRecord {
  double scale = 1.0;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();

  Eigen::Vector3d to_normalized(const Eigen::Vector3d& p) const {
    return scale * (p - offset);
  }
  Eigen::Vector3d to_original(const Eigen::Vector3d& p) const {
    return p / scale + offset;
  }
};

/// Uniformly scales by 1/max-extent and shifts the bounding-box min corner to
/// the origin, so all coordinates land in [0,1] with aspect ratio preserved.
/// Throws DegenerateExtent if all points coincide.
std::pair<PointCloud, RigidScaleRecord> normalize_unit_box(
    const PointCloud& cloud);

/// Generator knobs for the robustness studies: density decimation, additive
/// Gaussian noise and axis-aligned partial-overlap cropping.
struct PerturbationSpec {
  double keep_fraction = 1.0;  // (0, 1]
  double noise_sigma = 0.0;    // >= 0, units of the cloud
  double crop_fraction = 0.0;  // [0, 1)
  int crop_axis = 0;           // 0=x 1=y 2=z
  std::uint64_t seed = 0;

  bool is_noop() const {
    return keep_fraction >= 1.0 && noise_sigma <= 0.0 && crop_fraction <= 0.0;
  }
};

/// Keeps ceil(keep_fraction * N) points sampled uniformly without
/// replacement; input order is preserved among the survivors.
PointCloud decimate(const PointCloud& cloud, double keep_fraction, Rng& rng);

/// Adds independent N(0, sigma^2) noise to every coordinate.
PointCloud add_gaussian_noise(const PointCloud& cloud, double sigma, Rng& rng);

/// Removes the points whose coordinate along `axis` exceeds the
/// (1 - crop_fraction) quantile of that coordinate. Ties at the threshold are
/// kept, so the output size is N - floor(crop_fraction*N) up to ties.
PointCloud crop_half_space(const PointCloud& cloud, double crop_fraction,
                           int axis, Rng& rng);

enum class ShapeFamily { Sphere, Box, Torus, Composite };

ShapeFamily shape_family_from_string(const std::string& name);
std::string to_string(ShapeFamily family);

// Parametric surface samplers, raw units.
PointCloud sample_sphere_surface(int n, double radius,
                                 const Eigen::Vector3d& center, Rng& rng);
/// Faces picked with probability proportional to area; each point sits
/// exactly on one of the 6 faces.
PointCloud sample_box_surface(int n, const Eigen::Vector3d& half_extent,
                              const Eigen::Vector3d& center, Rng& rng);
/// Circular torus around the local z axis: every point is at distance
/// minor_radius from the circle of radius major_radius.
PointCloud sample_torus_surface(int n, double major_radius,
                                double minor_radius,
                                const Eigen::Vector3d& center, Rng& rng);

/// n points on a procedurally parameterized surface (radii/aspect drawn from
/// shape_seed), in raw shape units. Point placement is driven by rng.
PointCloud sample_shape_surface(ShapeFamily family, int n,
                                std::uint64_t shape_seed, Rng& rng);

/// sample_shape_surface followed by unit-box normalization.
PointCloud sample_shape(ShapeFamily family, int n, std::uint64_t shape_seed,
                        Rng& rng);

}  // namespace fmr
