#include "fmr/cloud.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fmr/errors.hpp"

namespace fmr {

Eigen::MatrixXd PointCloud::matrix() const {
  Eigen::MatrixXd m(size(), 3);
  for (int i = 0; i < size(); ++i) m.row(i) = points[i].transpose();
  return m;
}

PointCloud PointCloud::from_matrix(const Eigen::MatrixXd& m) {
  PointCloud c;
  c.points.resize(m.rows());
  for (int i = 0; i < m.rows(); ++i) c.points[i] = m.row(i).transpose();
  return c;
}

PointCloud apply(const RigidTransform& g, const PointCloud& cloud) {
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points) out.points.push_back(g * p);
  return out;
}

std::pair<PointCloud, RigidScaleRecord> normalize_unit_box(
    const PointCloud& cloud) {
  if (cloud.size() < 2) {
    throw DegenerateExtent("normalize_unit_box needs at least two points");
  }
  Eigen::Vector3d lo = cloud.points.front();
  Eigen::Vector3d hi = cloud.points.front();
  for (const auto& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = (hi - lo).maxCoeff();
  if (extent <= 0.0) {
    throw DegenerateExtent("all points coincide; unit-box scale undefined");
  }
  RigidScaleRecord rec;
  rec.scale = 1.0 / extent;
  rec.offset = lo;
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points) out.points.push_back(rec.to_normalized(p));
  return {std::move(out), rec};
}

PointCloud decimate(const PointCloud& cloud, double keep_fraction, Rng& rng) {
  if (keep_fraction <= 0.0 || keep_fraction > 1.0) {
    throw InvalidArgument("keep_fraction must be in (0, 1]");
  }
  const int n = cloud.size();
  const int keep = static_cast<int>(std::ceil(keep_fraction * n));
  if (keep >= n) return cloud;

  // Partial Fisher-Yates over indices, then restore input order.
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = 0; i < keep; ++i) {
    const int j = i + static_cast<int>(rng.uniform_index(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());

  PointCloud out;
  out.points.reserve(keep);
  for (int i : idx) out.points.push_back(cloud.points[i]);
  return out;
}

PointCloud add_gaussian_noise(const PointCloud& cloud, double sigma,
                              Rng& rng) {
  if (sigma < 0.0) throw InvalidArgument("sigma must be >= 0");
  PointCloud out = cloud;
  if (sigma == 0.0) return out;
  for (auto& p : out.points) {
    p.x() += sigma * rng.normal();
    p.y() += sigma * rng.normal();
    p.z() += sigma * rng.normal();
  }
  return out;
}

PointCloud crop_half_space(const PointCloud& cloud, double crop_fraction,
                           int axis, Rng& /*rng*/) {
  if (crop_fraction < 0.0 || crop_fraction >= 1.0) {
    throw InvalidArgument("crop_fraction must be in [0, 1)");
  }
  if (axis < 0 || axis > 2) throw InvalidArgument("axis must be 0, 1 or 2");
  if (crop_fraction == 0.0) return cloud;

  const int n = cloud.size();
  const int keep = n - static_cast<int>(std::floor(crop_fraction * n));
  std::vector<double> coords(n);
  for (int i = 0; i < n; ++i) coords[i] = cloud.points[i][axis];
  std::nth_element(coords.begin(), coords.begin() + (keep - 1), coords.end());
  const double threshold = coords[keep - 1];

  PointCloud out;
  out.points.reserve(keep);
  for (const auto& p : cloud.points) {
    if (p[axis] <= threshold) out.points.push_back(p);
  }
  if (out.empty()) throw EmptyResult("crop removed every point");
  return out;
}

ShapeFamily shape_family_from_string(const std::string& name) {
  if (name == "sphere") return ShapeFamily::Sphere;
  if (name == "box") return ShapeFamily::Box;
  if (name == "torus") return ShapeFamily::Torus;
  if (name == "composite") return ShapeFamily::Composite;
  throw InvalidArgument("unknown shape family: " + name);
}

std::string to_string(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::Sphere: return "sphere";
    case ShapeFamily::Box: return "box";
    case ShapeFamily::Torus: return "torus";
    case ShapeFamily::Composite: return "composite";
  }
  return "?";
}

PointCloud sample_sphere_surface(int n, double radius,
                                 const Eigen::Vector3d& center, Rng& rng) {
  PointCloud c;
  c.points.reserve(n);
  for (int i = 0; i < n; ++i) {
    c.points.push_back(center + radius * rng.unit_vector());
  }
  return c;
}

PointCloud sample_box_surface(int n, const Eigen::Vector3d& half_extent,
                              const Eigen::Vector3d& center, Rng& rng) {
  // Faces picked with probability proportional to area.
  const double ax = half_extent.y() * half_extent.z();
  const double ay = half_extent.x() * half_extent.z();
  const double az = half_extent.x() * half_extent.y();
  const double total = 2.0 * (ax + ay + az);
  PointCloud c;
  c.points.reserve(n);
  for (int i = 0; i < n; ++i) {
    double pick = rng.uniform(0.0, total);
    int axis = 0;
    if (pick < 2.0 * ax) {
      axis = 0;
    } else if (pick < 2.0 * (ax + ay)) {
      axis = 1;
      pick -= 2.0 * ax;
    } else {
      axis = 2;
      pick -= 2.0 * (ax + ay);
    }
    Eigen::Vector3d p;
    for (int k = 0; k < 3; ++k) {
      p[k] = rng.uniform(-half_extent[k], half_extent[k]);
    }
    const double side = (pick < (axis == 0 ? ax : axis == 1 ? ay : az))
                            ? half_extent[axis]
                            : -half_extent[axis];
    p[axis] = side;
    c.points.push_back(center + p);
  }
  return c;
}

PointCloud sample_torus_surface(int n, double major, double minor,
                                const Eigen::Vector3d& center, Rng& rng) {
  PointCloud c;
  c.points.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double v = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double ring = major + minor * std::cos(v);
    c.points.push_back(center + Eigen::Vector3d{ring * std::cos(u),
                                                ring * std::sin(u),
                                                minor * std::sin(v)});
  }
  return c;
}

PointCloud sample_shape_surface(ShapeFamily family, int n,
                                std::uint64_t shape_seed, Rng& rng) {
  if (n < 1) throw InvalidArgument("point count must be >= 1");
  Rng shape_rng(derive_seed(shape_seed, 0x5a5eu));
  switch (family) {
    case ShapeFamily::Sphere: {
      const double r = shape_rng.uniform(0.5, 1.5);
      return sample_sphere_surface(n, r, Eigen::Vector3d::Zero(), rng);
    }
    case ShapeFamily::Box: {
      Eigen::Vector3d half;
      for (int k = 0; k < 3; ++k) half[k] = shape_rng.uniform(0.3, 1.5);
      return sample_box_surface(n, half, Eigen::Vector3d::Zero(), rng);
    }
    case ShapeFamily::Torus: {
      const double major = shape_rng.uniform(0.5, 1.0);
      const double minor = major * shape_rng.uniform(0.15, 0.4);
      return sample_torus_surface(n, major, minor, Eigen::Vector3d::Zero(), rng);
    }
    case ShapeFamily::Composite: {
      // Two or three primitives at random offsets; parts sized by remaining
      // point budget so the total is exactly n.
      const int parts = 2 + static_cast<int>(shape_rng.uniform_index(2));
      PointCloud c;
      c.points.reserve(n);
      int remaining = n;
      for (int s = 0; s < parts; ++s) {
        const int count =
            (s + 1 == parts) ? remaining : std::max(1, remaining / (parts - s));
        remaining -= count;
        Eigen::Vector3d center = 1.2 * shape_rng.unit_vector();
        const int kind = static_cast<int>(shape_rng.uniform_index(3));
        PointCloud part;
        if (kind == 0) {
          part = sample_sphere_surface(count, shape_rng.uniform(0.3, 0.8), center, rng);
        } else if (kind == 1) {
          Eigen::Vector3d half;
          for (int k = 0; k < 3; ++k) half[k] = shape_rng.uniform(0.2, 0.9);
          part = sample_box_surface(count, half, center, rng);
        } else {
          const double major = shape_rng.uniform(0.3, 0.7);
          part = sample_torus_surface(count, major,
                              major * shape_rng.uniform(0.2, 0.5), center,
                              rng);
        }
        c.points.insert(c.points.end(), part.points.begin(),
                        part.points.end());
      }
      return c;
    }
  }
  throw InvalidArgument("unknown shape family");
}

PointCloud sample_shape(ShapeFamily family, int n, std::uint64_t shape_seed,
                        Rng& rng) {
  return normalize_unit_box(sample_shape_surface(family, n, shape_seed, rng))
      .first;
}

}  // namespace fmr
