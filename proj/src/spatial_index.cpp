#include "visocc/spatial_index.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>

namespace visocc {

namespace {
// Cell coordinates are packed into 21 bits each; that covers +-1e6 cells per
// axis, far beyond any scene this project produces.
constexpr std::int64_t kCoordBias = 1 << 20;
constexpr std::int64_t kCoordSpan = 1 << 21;
}  // namespace

SpatialIndex::SpatialIndex(std::span<const Vec3> points, double cell_size,
                           IndexMetric metric)
    : points_(points.begin(), points.end()), cell_size_(cell_size), metric_(metric) {
  if (!(cell_size > 0) || !std::isfinite(cell_size))
    throw std::invalid_argument("spatial index: cell_size must be positive");
  for (const Vec3& p : points_)
    if (!p.finite()) throw std::invalid_argument("spatial index: non-finite point");

  cells_.reserve(points_.size());
  for (std::uint32_t i = 0; i < points_.size(); ++i) {
    const Vec3& p = points_[i];
    const std::int64_t iz = metric_ == IndexMetric::CylinderBev ? 0 : coord(p.z);
    cells_[key(coord(p.x), coord(p.y), iz)].push_back(i);
  }
}

std::int64_t SpatialIndex::coord(double v) const {
  const std::int64_t c = std::int64_t(std::floor(v / cell_size_));
  if (c <= -kCoordBias || c >= kCoordBias)
    throw std::invalid_argument("spatial index: coordinate out of range");
  return c;
}

std::uint64_t SpatialIndex::key(std::int64_t ix, std::int64_t iy, std::int64_t iz) const {
  const std::uint64_t a = std::uint64_t(ix + kCoordBias);
  const std::uint64_t b = std::uint64_t(iy + kCoordBias);
  const std::uint64_t c = std::uint64_t(iz + kCoordBias);
  return (a * kCoordSpan + b) * kCoordSpan + c;
}

void SpatialIndex::collect(const Vec3& q, double r, std::vector<std::uint32_t>& out) const {
  // Probe reach in cells: any point within r of q lies in one of these cells.
  const std::int64_t reach = std::int64_t(std::ceil(r / cell_size_));
  const std::int64_t qx = coord(q.x), qy = coord(q.y);
  const std::int64_t qz = metric_ == IndexMetric::CylinderBev ? 0 : coord(q.z);
  const std::int64_t zlo = metric_ == IndexMetric::CylinderBev ? 0 : qz - reach;
  const std::int64_t zhi = metric_ == IndexMetric::CylinderBev ? 0 : qz + reach;
  const double r2 = r * r;

  for (std::int64_t ix = qx - reach; ix <= qx + reach; ++ix)
    for (std::int64_t iy = qy - reach; iy <= qy + reach; ++iy)
      for (std::int64_t iz = zlo; iz <= zhi; ++iz) {
        const auto it = cells_.find(key(ix, iy, iz));
        if (it == cells_.end()) continue;
        for (std::uint32_t i : it->second)
          if (distance2(q, points_[i], metric_) <= r2) out.push_back(i);
      }
}

std::vector<std::uint32_t> SpatialIndex::query_ball(const Vec3& q, double r) const {
  if (!(r > 0)) throw std::invalid_argument("spatial index: radius must be positive");
  std::vector<std::uint32_t> out;
  collect(q, r, out);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> SpatialIndex::radius_pairs(
    std::span<const Vec3> queries, double r) const {
  if (!(r > 0)) throw std::invalid_argument("spatial index: radius must be positive");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  std::vector<std::uint32_t> hits;
  for (std::uint32_t qi = 0; qi < queries.size(); ++qi) {
    hits.clear();
    collect(queries[qi], r, hits);
    std::sort(hits.begin(), hits.end());
    for (std::uint32_t si : hits) pairs.emplace_back(qi, si);
  }
  return pairs;
}

std::vector<std::uint32_t> knn_indices(std::span<const Vec3> points, int k) {
  const std::size_t n = points.size();
  if (k <= 0) throw std::invalid_argument("knn: k must be positive");
  if (n < std::size_t(k)) throw std::invalid_argument("knn: fewer points than k");

  Vec3 lo = points[0], hi = points[0];
  for (const Vec3& p : points) {
    if (!p.finite()) throw std::invalid_argument("knn: non-finite point");
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  const Vec3 ext = hi - lo;
  const double max_ext = std::max({ext.x, ext.y, ext.z, 1e-3});
  // Cell edge sized so a cell holds ~2 points at average density.
  const double volume =
      std::max(ext.x, 1e-3) * std::max(ext.y, 1e-3) * std::max(ext.z, 1e-3);
  const double cell = std::max(1e-3, std::cbrt(volume * 2.0 / double(n)));

  struct KeyHash {
    std::size_t operator()(std::uint64_t v) const { return mix64(v); }
  };
  auto cell_key = [](std::int64_t x, std::int64_t y, std::int64_t z) {
    return (std::uint64_t(x + kCoordBias) * kCoordSpan + std::uint64_t(y + kCoordBias)) *
               kCoordSpan +
           std::uint64_t(z + kCoordBias);
  };
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>, KeyHash> cells;
  cells.reserve(n);
  auto cell_of = [&](const Vec3& p) {
    return std::array<std::int64_t, 3>{std::int64_t(std::floor(p.x / cell)),
                                       std::int64_t(std::floor(p.y / cell)),
                                       std::int64_t(std::floor(p.z / cell))};
  };
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto c = cell_of(points[i]);
    cells[cell_key(c[0], c[1], c[2])].push_back(i);
  }

  const std::int64_t max_shell = std::int64_t(max_ext / cell) + 2;
  std::vector<std::uint32_t> result(n * std::size_t(k));
  std::vector<std::pair<double, std::uint32_t>> cand;

  for (std::uint32_t i = 0; i < n; ++i) {
    cand.clear();
    const Vec3& q = points[i];
    const auto c = cell_of(q);
    double kth = std::numeric_limits<double>::infinity();

    // Expanding Chebyshev shells. Any point in shell s is at least
    // (s-1)*cell away, so the search stops once that bound exceeds the
    // current k-th best distance.
    for (std::int64_t s = 0; s <= max_shell; ++s) {
      const double lower = double(s - 1) * cell;
      if (cand.size() >= std::size_t(k) && lower > 0 && lower * lower >= kth) break;
      for (std::int64_t dx = -s; dx <= s; ++dx)
        for (std::int64_t dy = -s; dy <= s; ++dy)
          for (std::int64_t dz = -s; dz <= s; ++dz) {
            if (std::max({std::llabs(dx), std::llabs(dy), std::llabs(dz)}) != s) continue;
            const auto it = cells.find(cell_key(c[0] + dx, c[1] + dy, c[2] + dz));
            if (it == cells.end()) continue;
            for (std::uint32_t j : it->second)
              cand.emplace_back(
                  SpatialIndex::distance2(q, points[j], IndexMetric::Ball3d), j);
          }
      if (cand.size() >= std::size_t(k)) {
        std::nth_element(cand.begin(), cand.begin() + (k - 1), cand.end());
        kth = cand[std::size_t(k) - 1].first;
      }
    }

    // Distance ties resolve toward the lower point index.
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (int j = 0; j < k; ++j) result[i * std::size_t(k) + j] = cand[std::size_t(j)].second;
  }
  return result;
}

}  // namespace visocc
