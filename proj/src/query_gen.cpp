#include "visocc/query_gen.hpp"

#include <stdexcept>

namespace visocc {

void QuerySet::validate() const {
  const std::size_t n = positions.size();
  if (occupancy.size() != n || intensity_target.size() != n || kind.size() != n ||
      source_index.size() != n)
    throw std::invalid_argument("query set: parallel array length mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (!positions[i].finite())
      throw std::invalid_argument("query set: non-finite position");
    if (occupancy[i] > 1) throw std::invalid_argument("query set: occupancy not in {0,1}");
    const bool occupied = occupancy[i] == 1;
    const bool behind = kind[i] == QueryKind::Behind;
    if (occupied != behind)
      throw std::invalid_argument("query set: occupancy label contradicts kind");
    const double it = intensity_target[i];
    if (it != kNoIntensity && !(it >= 0.0 && it <= 1.0))
      throw std::invalid_argument("query set: intensity target outside [0,1]");
    if (kind[i] == QueryKind::Sight && it != kNoIntensity)
      throw std::invalid_argument("query set: sight query carries an intensity target");
  }
}

QuerySet generate_queries(const PointCloud& cloud, double delta, OffsetMode mode,
                          std::uint64_t seed) {
  if (!(delta > 0)) throw std::invalid_argument("generate_queries: delta must be positive");
  if (cloud.size() == 0) throw std::invalid_argument("generate_queries: empty cloud");

  QuerySet qs;
  qs.delta = delta;
  qs.mode = mode;
  qs.seed = seed;
  qs.positions.reserve(cloud.size() * 3);

  const SplitRng base(seed, /*stream=*/0x51475259ull);  // "QGRY"
  const Vec3 c = cloud.sensor_origin;

  for (std::uint32_t i = 0; i < cloud.size(); ++i) {
    const Vec3 p = cloud.points[i];
    const Vec3 to_point = p - c;
    const double dist = to_point.norm();
    const Vec3 u = to_point / dist;  // unit vector sensor -> point

    SplitRng rng = base.split(i);
    double d_front = delta, d_behind = delta;
    if (mode == OffsetMode::Uniform) {
      // U(0, delta]: zero would collapse the query onto the surface point.
      d_front = delta * (1.0 - rng.uniform());
      d_behind = delta * (1.0 - rng.uniform());
    }
    // Sight sample on the open segment (c, p).
    double t = rng.uniform();
    while (t == 0.0) t = rng.uniform();

    if (dist <= d_front) {
      // No room for a front query between sensor and point.
      ++qs.skipped_points;
      continue;
    }

    const double intensity =
        cloud.has_intensity() ? cloud.intensities[i] : kNoIntensity;

    qs.positions.push_back(p - d_front * u);
    qs.occupancy.push_back(0);
    qs.intensity_target.push_back(intensity);
    qs.kind.push_back(QueryKind::Front);
    qs.source_index.push_back(i);

    qs.positions.push_back(p + d_behind * u);
    qs.occupancy.push_back(1);
    qs.intensity_target.push_back(intensity);
    qs.kind.push_back(QueryKind::Behind);
    qs.source_index.push_back(i);

    qs.positions.push_back(c + t * to_point);
    qs.occupancy.push_back(0);
    qs.intensity_target.push_back(kNoIntensity);
    qs.kind.push_back(QueryKind::Sight);
    qs.source_index.push_back(i);
  }
  return qs;
}

QuerySet subsample_queries(const QuerySet& queries, std::size_t max_queries,
                           std::uint64_t seed) {
  if (queries.size() <= max_queries) return queries;
  const auto idx = downsample_indices(queries.size(), max_queries, seed);

  QuerySet out;
  out.delta = queries.delta;
  out.mode = queries.mode;
  out.seed = queries.seed;
  out.skipped_points = queries.skipped_points;
  out.positions.reserve(idx.size());
  for (std::uint32_t i : idx) {
    out.positions.push_back(queries.positions[i]);
    out.occupancy.push_back(queries.occupancy[i]);
    out.intensity_target.push_back(queries.intensity_target[i]);
    out.kind.push_back(queries.kind[i]);
    out.source_index.push_back(queries.source_index[i]);
  }
  return out;
}

}  // namespace visocc
