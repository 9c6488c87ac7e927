#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "visocc/geometry.hpp"

namespace visocc {

enum class PrimitiveKind : std::uint8_t { GroundPlane, Box, Cylinder, Sphere };

// Semantic class ids, also used as probe targets downstream.
inline constexpr std::uint32_t kClassGround = 0;
inline constexpr std::uint32_t kClassBox = 1;
inline constexpr std::uint32_t kClassCylinder = 2;
inline constexpr std::uint32_t kClassSphere = 3;
inline constexpr int kNumClasses = 4;

// One solid. The ground plane is the half-space z <= plane_height; the other
// kinds are closed solids. Fields are used per kind (see contains()).
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::GroundPlane;
  std::uint32_t class_id = kClassGround;
  double base_intensity = 0.5;

  double plane_height = 0.0;  // ground
  Vec3 center{};              // box / cylinder (mid-height) / sphere
  Vec3 half_extent{};         // box
  double yaw = 0.0;           // box rotation about z
  double radius = 0.0;        // cylinder / sphere
  double height = 0.0;        // cylinder

  // True when x lies in the solid inflated by pad (pad >= 0).
  bool contains(const Vec3& x, double pad = 0.0) const;

  // Nearest surface crossing along o + t*d with t > t_min, if any.
  std::optional<double> ray_hit(const Vec3& o, const Vec3& d, double t_min) const;

  // [t_enter, t_exit] of the ray inside the solid (ground: exit is +inf).
  // Used by tests to reason about penetration depth behind a hit.
  std::optional<std::pair<double, double>> ray_interval(const Vec3& o, const Vec3& d) const;
};

struct Scene {
  std::vector<Primitive> primitives;
  Aabb bounds;
};

struct SceneConfig {
  Aabb bounds{{-20, -20, -1}, {20, 20, 6}};
  double ground_height = 0.0;
  int n_boxes = 6;
  int n_cylinders = 5;
  int n_spheres = 4;
  double box_half_min = 0.3, box_half_max = 1.5;
  double cyl_radius_min = 0.15, cyl_radius_max = 0.8;
  double cyl_height_min = 0.8, cyl_height_max = 3.0;
  double sph_radius_min = 0.3, sph_radius_max = 1.2;
  double sph_float_max = 1.5;  // max gap between ground and a sphere's bottom
  // Per-class surface reflectance; drawn uniformly within +-intensity_halfwidth.
  double class_intensity[kNumClasses] = {0.15, 0.45, 0.70, 0.90};
  double intensity_halfwidth = 0.05;
  // Solids must keep this clearance from the sensor origin.
  double sensor_clearance = 0.5;
  Vec3 sensor_origin{0, 0, 1.8};
  int max_placement_retries = 100;
};

struct SensorModel {
  Vec3 origin{0, 0, 1.8};
  std::vector<double> elevation_angles;  // radians, one per beam
  int n_azimuth = 1024;
  double max_range = 60.0;
  double range_noise_sigma = 0.01;      // meters, along the ray
  double intensity_noise_sigma = 0.03;  // additive, clamped to [0,1]

  // n_elevation beams evenly spaced over [min_deg, max_deg] degrees.
  static SensorModel make(int n_elevation, int n_azimuth, double min_deg,
                          double max_deg, double max_range, Vec3 origin);
  static SensorModel default_sensor() {
    return make(32, 1024, -25.0, 5.0, 60.0, {0, 0, 1.8});
  }
};

// Randomly placed primitives over a ground plane. Placement retries until the
// sensor origin keeps its clearance from every solid; throws when the retry
// budget is exhausted.
Scene sample_scene(const SceneConfig& config, std::uint64_t seed);

// Casts every beam, keeps first hits within max_range, applies range and
// intensity noise (keyed per ray, so thread schedule cannot matter), and
// returns hits in ray order. Throws if no ray hits anything.
PointCloud cast_scan(const Scene& scene, const SensorModel& sensor, std::uint64_t seed);

// Whether x lies inside any solid (closed sets; ground counts below its plane).
bool true_occupancy(const Scene& scene, const Vec3& x);

}  // namespace visocc
