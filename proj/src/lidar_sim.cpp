#include "visocc/lidar_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace visocc {

namespace {

constexpr double kPi = std::numbers::pi;
// Points may never collapse onto the sensor; keep a physical minimum range.
constexpr double kMinRange = 1e-3;

struct Rot2 {
  double c, s;
  // world -> box frame (rotate by -yaw)
  Vec3 to_local(const Vec3& v) const { return {c * v.x + s * v.y, -s * v.x + c * v.y, v.z}; }
};

// Entry/exit of a ray against a slab [lo, hi] along one local axis.
// Returns false when the ray misses the slab entirely.
bool slab(double o, double d, double lo, double hi, double& t0, double& t1) {
  if (d == 0.0) return o >= lo && o <= hi;
  double a = (lo - o) / d, b = (hi - o) / d;
  if (a > b) std::swap(a, b);
  t0 = std::max(t0, a);
  t1 = std::min(t1, b);
  return t0 <= t1;
}

}  // namespace

bool Primitive::contains(const Vec3& x, double pad) const {
  switch (kind) {
    case PrimitiveKind::GroundPlane:
      return x.z <= plane_height + pad;
    case PrimitiveKind::Box: {
      const Rot2 r{std::cos(yaw), std::sin(yaw)};
      const Vec3 l = r.to_local(x - center);
      return std::abs(l.x) <= half_extent.x + pad &&
             std::abs(l.y) <= half_extent.y + pad &&
             std::abs(l.z) <= half_extent.z + pad;
    }
    case PrimitiveKind::Cylinder: {
      const double dx = x.x - center.x, dy = x.y - center.y;
      return dx * dx + dy * dy <= (radius + pad) * (radius + pad) &&
             std::abs(x.z - center.z) <= height * 0.5 + pad;
    }
    case PrimitiveKind::Sphere:
      return (x - center).norm2() <= (radius + pad) * (radius + pad);
  }
  return false;
}

std::optional<std::pair<double, double>> Primitive::ray_interval(const Vec3& o,
                                                                 const Vec3& d) const {
  switch (kind) {
    case PrimitiveKind::GroundPlane: {
      if (d.z == 0.0) {
        if (o.z <= plane_height) return std::pair{0.0, std::numeric_limits<double>::infinity()};
        return std::nullopt;
      }
      const double t = (plane_height - o.z) / d.z;
      if (d.z < 0) {
        // Descending: inside from t onward.
        if (t < 0) return std::pair{0.0, std::numeric_limits<double>::infinity()};
        return std::pair{t, std::numeric_limits<double>::infinity()};
      }
      // Ascending: inside until t.
      if (t < 0) return std::nullopt;
      return std::pair{0.0, t};
    }
    case PrimitiveKind::Box: {
      const Rot2 r{std::cos(yaw), std::sin(yaw)};
      const Vec3 lo_ = r.to_local(o - center);
      const Vec3 ld = r.to_local(d);
      double t0 = -std::numeric_limits<double>::infinity();
      double t1 = std::numeric_limits<double>::infinity();
      if (!slab(lo_.x, ld.x, -half_extent.x, half_extent.x, t0, t1)) return std::nullopt;
      if (!slab(lo_.y, ld.y, -half_extent.y, half_extent.y, t0, t1)) return std::nullopt;
      if (!slab(lo_.z, ld.z, -half_extent.z, half_extent.z, t0, t1)) return std::nullopt;
      return std::pair{t0, t1};
    }
    case PrimitiveKind::Cylinder: {
      // Side surface as a 2D quadratic, caps as a z slab; solid is the
      // intersection of the infinite cylinder and the slab.
      const double ox = o.x - center.x, oy = o.y - center.y;
      const double a = d.x * d.x + d.y * d.y;
      double t0 = -std::numeric_limits<double>::infinity();
      double t1 = std::numeric_limits<double>::infinity();
      if (a == 0.0) {
        if (ox * ox + oy * oy > radius * radius) return std::nullopt;
      } else {
        const double b = 2.0 * (ox * d.x + oy * d.y);
        const double c = ox * ox + oy * oy - radius * radius;
        const double disc = b * b - 4 * a * c;
        if (disc < 0) return std::nullopt;
        const double sq = std::sqrt(disc);
        t0 = (-b - sq) / (2 * a);
        t1 = (-b + sq) / (2 * a);
      }
      if (!slab(o.z - center.z, d.z, -height * 0.5, height * 0.5, t0, t1))
        return std::nullopt;
      return std::pair{t0, t1};
    }
    case PrimitiveKind::Sphere: {
      const Vec3 oc = o - center;
      const double b = 2.0 * oc.dot(d);
      const double c = oc.norm2() - radius * radius;
      const double a = d.norm2();
      const double disc = b * b - 4 * a * c;
      if (disc < 0) return std::nullopt;
      const double sq = std::sqrt(disc);
      return std::pair{(-b - sq) / (2 * a), (-b + sq) / (2 * a)};
    }
  }
  return std::nullopt;
}

std::optional<double> Primitive::ray_hit(const Vec3& o, const Vec3& d, double t_min) const {
  const auto iv = ray_interval(o, d);
  if (!iv) return std::nullopt;
  // First surface crossing after t_min: the entry if still ahead, else the
  // exit (ray started inside; does not happen for scene-sampled sensors).
  if (iv->first > t_min) return iv->first;
  if (iv->second > t_min && std::isfinite(iv->second)) return iv->second;
  return std::nullopt;
}

SensorModel SensorModel::make(int n_elevation, int n_azimuth, double min_deg,
                              double max_deg, double max_range, Vec3 origin) {
  if (n_elevation < 1 || n_azimuth < 1)
    throw std::invalid_argument("sensor: beam counts must be positive");
  SensorModel s;
  s.origin = origin;
  s.n_azimuth = n_azimuth;
  s.max_range = max_range;
  s.elevation_angles.resize(std::size_t(n_elevation));
  for (int i = 0; i < n_elevation; ++i) {
    const double f = n_elevation == 1 ? 0.0 : double(i) / double(n_elevation - 1);
    s.elevation_angles[std::size_t(i)] = (min_deg + (max_deg - min_deg) * f) * kPi / 180.0;
  }
  return s;
}

Scene sample_scene(const SceneConfig& config, std::uint64_t seed) {
  SplitRng rng(seed, /*stream=*/0x53434e45ull);  // "SCNE"
  Scene scene;
  scene.bounds = config.bounds;

  Primitive ground;
  ground.kind = PrimitiveKind::GroundPlane;
  ground.class_id = kClassGround;
  ground.plane_height = config.ground_height;
  ground.base_intensity = std::clamp(
      config.class_intensity[kClassGround] +
          rng.uniform(-config.intensity_halfwidth, config.intensity_halfwidth),
      0.0, 1.0);
  scene.primitives.push_back(ground);

  const auto place = [&](Primitive proto, double bound_radius, auto randomize) {
    for (int attempt = 0; attempt < config.max_placement_retries; ++attempt) {
      Primitive p = proto;
      randomize(p);
      // Keep the footprint inside bounds so every solid intersects them.
      const double margin = bound_radius;
      p.center.x = rng.uniform(config.bounds.min.x + margin, config.bounds.max.x - margin);
      p.center.y = rng.uniform(config.bounds.min.y + margin, config.bounds.max.y - margin);
      if (!p.contains(config.sensor_origin, config.sensor_clearance)) {
        scene.primitives.push_back(p);
        return;
      }
    }
    throw std::runtime_error("sample_scene: placement retries exhausted");
  };

  const auto draw_intensity = [&](std::uint32_t cls) {
    return std::clamp(config.class_intensity[cls] +
                          rng.uniform(-config.intensity_halfwidth, config.intensity_halfwidth),
                      0.0, 1.0);
  };

  for (int i = 0; i < config.n_boxes; ++i) {
    Primitive proto;
    proto.kind = PrimitiveKind::Box;
    proto.class_id = kClassBox;
    place(proto, config.box_half_max * std::numbers::sqrt2, [&](Primitive& p) {
      p.half_extent = {rng.uniform(config.box_half_min, config.box_half_max),
                       rng.uniform(config.box_half_min, config.box_half_max),
                       rng.uniform(config.box_half_min, config.box_half_max)};
      p.yaw = rng.uniform(0.0, 2.0 * kPi);
      p.center.z = config.ground_height + p.half_extent.z;  // resting on ground
      p.base_intensity = draw_intensity(kClassBox);
    });
  }
  for (int i = 0; i < config.n_cylinders; ++i) {
    Primitive proto;
    proto.kind = PrimitiveKind::Cylinder;
    proto.class_id = kClassCylinder;
    place(proto, config.cyl_radius_max, [&](Primitive& p) {
      p.radius = rng.uniform(config.cyl_radius_min, config.cyl_radius_max);
      p.height = rng.uniform(config.cyl_height_min, config.cyl_height_max);
      p.center.z = config.ground_height + p.height * 0.5;  // base on ground
      p.base_intensity = draw_intensity(kClassCylinder);
    });
  }
  for (int i = 0; i < config.n_spheres; ++i) {
    Primitive proto;
    proto.kind = PrimitiveKind::Sphere;
    proto.class_id = kClassSphere;
    place(proto, config.sph_radius_max, [&](Primitive& p) {
      p.radius = rng.uniform(config.sph_radius_min, config.sph_radius_max);
      p.center.z = config.ground_height + p.radius +
                   rng.uniform(0.0, config.sph_float_max);
      p.base_intensity = draw_intensity(kClassSphere);
    });
  }
  return scene;
}

PointCloud cast_scan(const Scene& scene, const SensorModel& sensor, std::uint64_t seed) {
  if (scene.primitives.empty()) throw std::invalid_argument("cast_scan: empty scene");
  for (const Primitive& p : scene.primitives)
    if (p.kind != PrimitiveKind::GroundPlane && p.contains(sensor.origin))
      throw std::invalid_argument("cast_scan: sensor origin inside a solid");

  const SplitRng base(seed, /*stream=*/0x5343414eull);  // "SCAN"
  std::vector<Vec3> pts;
  std::vector<double> intens;
  std::vector<std::uint32_t> labels;

  const std::size_t n_elev = sensor.elevation_angles.size();
  for (std::size_t ie = 0; ie < n_elev; ++ie) {
    const double el = sensor.elevation_angles[ie];
    const double ce = std::cos(el), se = std::sin(el);
    for (int ia = 0; ia < sensor.n_azimuth; ++ia) {
      const double az = 2.0 * kPi * double(ia) / double(sensor.n_azimuth);
      const Vec3 dir{ce * std::cos(az), ce * std::sin(az), se};

      double best_t = std::numeric_limits<double>::infinity();
      const Primitive* best = nullptr;
      for (const Primitive& p : scene.primitives) {
        const auto t = p.ray_hit(sensor.origin, dir, kMinRange);
        if (t && *t < best_t) {
          best_t = *t;
          best = &p;
        }
      }
      if (best == nullptr || best_t > sensor.max_range) continue;

      SplitRng rng = base.split(ie * std::size_t(sensor.n_azimuth) + std::size_t(ia));
      const double t_noisy = std::clamp(
          best_t + sensor.range_noise_sigma * rng.gaussian(), kMinRange, sensor.max_range);
      const double inten = std::clamp(
          best->base_intensity + sensor.intensity_noise_sigma * rng.gaussian(), 0.0, 1.0);
      pts.push_back(sensor.origin + t_noisy * dir);
      intens.push_back(inten);
      labels.push_back(best->class_id);
    }
  }
  if (pts.empty()) throw std::runtime_error("cast_scan: no ray hit any surface");
  return PointCloud::make(sensor.origin, std::move(pts), std::move(intens),
                          std::move(labels));
}

bool true_occupancy(const Scene& scene, const Vec3& x) {
  for (const Primitive& p : scene.primitives)
    if (p.contains(x)) return true;
  return false;
}

}  // namespace visocc
