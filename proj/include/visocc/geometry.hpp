#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "visocc/rng.hpp"

namespace visocc {

// Minimum distance any point may have from the sensor origin; closer points
// have no defined viewing direction and are dropped at cloud construction.
inline constexpr double kEpsGeom = 1e-6;

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm2() const { return dot(*this); }
  double norm() const { return std::sqrt(norm2()); }
  Vec3 normalized() const { return *this / norm(); }
  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

struct Aabb {
  Vec3 min, max;
  bool contains_xy(double x, double y) const {
    return x >= min.x && x <= max.x && y >= min.y && y <= max.y;
  }
};

// Point set with a known sensor origin. Intensities/labels are either empty
// or exactly parallel to points; this is checked by validate().
struct PointCloud {
  Vec3 sensor_origin;
  std::vector<Vec3> points;
  std::vector<double> intensities;   // empty means "not measured"
  std::vector<std::uint32_t> labels; // empty means "unlabeled"

  std::size_t size() const { return points.size(); }
  bool has_intensity() const { return !intensities.empty(); }
  bool has_labels() const { return !labels.empty(); }

  // Builds a cloud, dropping points within kEpsGeom of the origin (parallel
  // arrays stay co-indexed). Throws on array length or value violations.
  static PointCloud make(const Vec3& origin, std::vector<Vec3> pts,
                         std::vector<double> intens = {},
                         std::vector<std::uint32_t> labels = {});

  void validate() const;  // throws std::invalid_argument on broken invariants
};

// z-rotation followed by optional x / y mirror. One transform per cloud;
// applied to points and sensor origin alike so view geometry is preserved.
struct RigidAugment {
  double cos_t = 1, sin_t = 0;
  bool flip_x = false, flip_y = false;

  Vec3 apply(const Vec3& p) const {
    Vec3 r{cos_t * p.x - sin_t * p.y, sin_t * p.x + cos_t * p.y, p.z};
    if (flip_x) r.x = -r.x;
    if (flip_y) r.y = -r.y;
    return r;
  }
};

// Draws the transform for a given seed: theta ~ U[0, 2pi) when rotation is
// enabled, each mirror applied with probability 1/2 when flips are enabled.
RigidAugment sample_augment(std::uint64_t seed, bool enable_rotation, bool enable_flips);

PointCloud apply_augment(const PointCloud& cloud, const RigidAugment& t);

inline PointCloud augment(const PointCloud& cloud, std::uint64_t seed,
                          bool enable_rotation = true, bool enable_flips = true) {
  return apply_augment(cloud, sample_augment(seed, enable_rotation, enable_flips));
}

// Uniform subset of exactly max_points without replacement (identity when the
// cloud is already small enough). Surviving points keep their relative order.
PointCloud downsample(const PointCloud& cloud, std::size_t max_points, std::uint64_t seed);

// Index set chosen by downsample(); exposed for tests and for pairing the
// same subset across parallel arrays.
std::vector<std::uint32_t> downsample_indices(std::size_t n, std::size_t max_points,
                                              std::uint64_t seed);

}  // namespace visocc
