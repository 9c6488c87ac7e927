#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "visocc/geometry.hpp"

namespace visocc {

enum class IndexMetric : std::uint8_t {
  Ball3d,       // Euclidean distance in 3D
  CylinderBev,  // distance in (x, y) only; z is ignored
};

// Uniform hash grid over support points. Cells are cubes (squares in BEV
// mode) of edge cell_size; a radius query probes every cell that can contain
// a point within r, so results are exact for any cell_size, not just r.
class SpatialIndex {
 public:
  SpatialIndex(std::span<const Vec3> points, double cell_size, IndexMetric metric);

  // All support indices within r of q (inclusive boundary), ascending.
  std::vector<std::uint32_t> query_ball(const Vec3& q, double r) const;

  // Every (query, support) pair with distance <= r, sorted by query index
  // then support index.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> radius_pairs(
      std::span<const Vec3> queries, double r) const;

  double cell_size() const { return cell_size_; }
  IndexMetric metric() const { return metric_; }
  std::size_t size() const { return points_.size(); }
  std::size_t bucket_count() const { return cells_.size(); }

  static double distance2(const Vec3& a, const Vec3& b, IndexMetric metric) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    if (metric == IndexMetric::CylinderBev) return dx * dx + dy * dy;
    const double dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
  }

 private:
  struct KeyHash {
    std::size_t operator()(std::uint64_t k) const { return mix64(k); }
  };

  std::int64_t coord(double v) const;
  std::uint64_t key(std::int64_t ix, std::int64_t iy, std::int64_t iz) const;
  void collect(const Vec3& q, double r, std::vector<std::uint32_t>& out) const;

  std::vector<Vec3> points_;
  double cell_size_;
  IndexMetric metric_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>, KeyHash> cells_;
};

// Indices of the k nearest points for every point (self included, distance
// ties broken toward the lower index). Row i occupies [i*k, (i+1)*k), sorted
// by ascending distance. Throws if the cloud has fewer than k points.
std::vector<std::uint32_t> knn_indices(std::span<const Vec3> points, int k);

}  // namespace visocc
