#pragma once

#include <cstdint>
#include <vector>

#include "visocc/geometry.hpp"

namespace visocc {

enum class QueryKind : std::uint8_t { Front = 0, Behind = 1, Sight = 2 };
enum class OffsetMode : std::uint8_t { Fixed = 0, Uniform = 1 };

// Occupancy supervision harvested from sensor visibility. For a sensor at c
// and a return at p, space on the open segment (c, p) is known empty and
// space just past p (within delta) is known occupied.
struct QuerySet {
  std::vector<Vec3> positions;
  std::vector<std::uint8_t> occupancy;      // 1 = occupied
  std::vector<double> intensity_target;     // kNoIntensity when not supervised
  std::vector<QueryKind> kind;
  std::vector<std::uint32_t> source_index;  // generating point in the cloud

  double delta = 0.1;
  OffsetMode mode = OffsetMode::Uniform;
  std::uint64_t seed = 0;
  std::size_t skipped_points = 0;  // points too close to the sensor for a front query

  std::size_t size() const { return positions.size(); }
  void validate() const;  // throws on broken parallel arrays or labels
};

inline constexpr double kNoIntensity = -1.0;

// Three queries per surviving point, in point order: front (empty, toward the
// sensor), behind (occupied, past the point, at most delta deep), sight
// (empty, uniform on the open segment sensor->point). Fixed mode puts front
// and behind exactly delta away; uniform mode draws both depths from
// U(0, delta]. Per-point draws are keyed by (seed, point index) and never by
// coordinates, so rigidly transforming the cloud transforms the queries in
// lockstep.
QuerySet generate_queries(const PointCloud& cloud, double delta, OffsetMode mode,
                          std::uint64_t seed);

// Uniform subset of at most max_queries, preserving relative order.
QuerySet subsample_queries(const QuerySet& queries, std::size_t max_queries,
                           std::uint64_t seed);

}  // namespace visocc
