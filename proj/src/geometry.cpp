#include "visocc/geometry.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>

namespace visocc {

double SplitRng::gaussian() {
  const double u1 = uniform_pos();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

PointCloud PointCloud::make(const Vec3& origin, std::vector<Vec3> pts,
                            std::vector<double> intens,
                            std::vector<std::uint32_t> labels) {
  if (!intens.empty() && intens.size() != pts.size())
    throw std::invalid_argument("point cloud: intensity length mismatch");
  if (!labels.empty() && labels.size() != pts.size())
    throw std::invalid_argument("point cloud: label length mismatch");

  PointCloud c;
  c.sensor_origin = origin;
  c.points.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if ((pts[i] - origin).norm() <= kEpsGeom) continue;  // undefined view direction
    c.points.push_back(pts[i]);
    if (!intens.empty()) c.intensities.push_back(intens[i]);
    if (!labels.empty()) c.labels.push_back(labels[i]);
  }
  c.validate();
  return c;
}

void PointCloud::validate() const {
  if (!sensor_origin.finite())
    throw std::invalid_argument("point cloud: non-finite sensor origin");
  if (!intensities.empty() && intensities.size() != points.size())
    throw std::invalid_argument("point cloud: intensity length mismatch");
  if (!labels.empty() && labels.size() != points.size())
    throw std::invalid_argument("point cloud: label length mismatch");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].finite())
      throw std::invalid_argument("point cloud: non-finite point");
    if ((points[i] - sensor_origin).norm() <= kEpsGeom)
      throw std::invalid_argument("point cloud: point coincides with sensor origin");
  }
  for (double v : intensities) {
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("point cloud: intensity outside [0,1]");
  }
}

RigidAugment sample_augment(std::uint64_t seed, bool enable_rotation, bool enable_flips) {
  SplitRng rng(seed, /*stream=*/0x41554731ull);  // "AUG1"
  RigidAugment t;
  if (enable_rotation) {
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    t.cos_t = std::cos(theta);
    t.sin_t = std::sin(theta);
  }
  if (enable_flips) {
    t.flip_x = rng.uniform() < 0.5;
    t.flip_y = rng.uniform() < 0.5;
  }
  return t;
}

PointCloud apply_augment(const PointCloud& cloud, const RigidAugment& t) {
  PointCloud out = cloud;
  out.sensor_origin = t.apply(cloud.sensor_origin);
  for (std::size_t i = 0; i < cloud.points.size(); ++i)
    out.points[i] = t.apply(cloud.points[i]);
  return out;
}

std::vector<std::uint32_t> downsample_indices(std::size_t n, std::size_t max_points,
                                              std::uint64_t seed) {
  std::vector<std::uint32_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = std::uint32_t(i);
  if (n <= max_points) return idx;

  // Partial Fisher-Yates: the first max_points slots become the sample.
  SplitRng rng(seed, /*stream=*/0x44574e53ull);  // "DWNS"
  for (std::size_t i = 0; i < max_points; ++i) {
    const std::size_t j = i + std::size_t(rng.uniform_int(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(max_points);
  std::sort(idx.begin(), idx.end());
  return idx;
}

PointCloud downsample(const PointCloud& cloud, std::size_t max_points, std::uint64_t seed) {
  if (cloud.size() <= max_points) return cloud;
  const auto idx = downsample_indices(cloud.size(), max_points, seed);

  PointCloud out;
  out.sensor_origin = cloud.sensor_origin;
  out.points.reserve(idx.size());
  for (std::uint32_t i : idx) {
    out.points.push_back(cloud.points[i]);
    if (cloud.has_intensity()) out.intensities.push_back(cloud.intensities[i]);
    if (cloud.has_labels()) out.labels.push_back(cloud.labels[i]);
  }
  return out;
}

}  // namespace visocc
