#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "visocc/io.hpp"

namespace visocc {

namespace {

struct SchemaEntry {
  const char* key;
  const char* def;
  const char* doc;
};

// Every recognized key with its default. Order here is the order keys are
// rendered in documented_defaults() and entries().
const SchemaEntry kSchema[] = {
    {"seed", "42", "master seed; scenes, model init and sampling derive from it"},
    {"out_dir", "out", "directory subcommands write their artifacts into"},
    {"threads", "1", "worker threads; outputs do not depend on this value"},

    {"scene.bounds_min", "-20 -20 -1", "scene AABB lower corner (x y z)"},
    {"scene.bounds_max", "20 20 6", "scene AABB upper corner (x y z)"},
    {"scene.ground_height", "0", "ground plane height"},
    {"scene.n_boxes", "6", "boxes per scene"},
    {"scene.n_cylinders", "5", "cylinders per scene"},
    {"scene.n_spheres", "4", "spheres per scene"},
    {"scene.box_half_min", "0.3", "box half-extent lower bound"},
    {"scene.box_half_max", "1.5", "box half-extent upper bound"},
    {"scene.cyl_radius_min", "0.15", "cylinder radius lower bound"},
    {"scene.cyl_radius_max", "0.8", "cylinder radius upper bound"},
    {"scene.cyl_height_min", "0.8", "cylinder height lower bound"},
    {"scene.cyl_height_max", "3.0", "cylinder height upper bound"},
    {"scene.sph_radius_min", "0.3", "sphere radius lower bound"},
    {"scene.sph_radius_max", "1.2", "sphere radius upper bound"},
    {"scene.sph_float_max", "1.5", "max gap between ground and a sphere's bottom"},
    {"scene.intensity_ground", "0.15", "ground base reflectance"},
    {"scene.intensity_box", "0.45", "box base reflectance"},
    {"scene.intensity_cylinder", "0.70", "cylinder base reflectance"},
    {"scene.intensity_sphere", "0.90", "sphere base reflectance"},
    {"scene.intensity_halfwidth", "0.05", "uniform reflectance jitter half-width"},
    {"scene.sensor_clearance", "0.5", "min distance solids keep from the sensor"},
    {"scene.max_placement_retries", "100", "placement attempts before giving up"},

    {"sensor.n_elevation", "32", "beam count"},
    {"sensor.n_azimuth", "1024", "azimuth steps per beam"},
    {"sensor.elevation_min_deg", "-25", "lowest beam elevation (degrees)"},
    {"sensor.elevation_max_deg", "5", "highest beam elevation (degrees)"},
    {"sensor.max_range", "60", "max ray range (meters)"},
    {"sensor.origin", "0 0 1.8", "sensor position (x y z)"},
    {"sensor.range_noise_sigma", "0.01", "range noise stddev (meters)"},
    {"sensor.intensity_noise_sigma", "0.03", "intensity noise stddev"},

    {"simulate.scene_count", "8", "scenes the simulate subcommand writes"},

    {"pretrain.epochs", "50", "pretraining epochs"},
    {"pretrain.batch_size", "4", "scenes per optimizer step"},
    {"pretrain.scene_count", "256", "training scenes"},
    {"pretrain.eval_scene_count", "16", "held-out scenes for occupancy eval"},
    {"pretrain.max_points", "2048", "points kept per scan"},
    {"pretrain.max_queries", "2048", "query points kept per scene"},
    {"pretrain.delta", "0.1", "assumed occupied thickness behind a hit (meters)"},
    {"pretrain.offset_mode", "uniform", "query offsets: fixed | uniform"},
    {"pretrain.radius", "1.0", "support radius for decoding (meters)"},
    {"pretrain.lambda", "1.0", "intensity loss weight"},
    {"pretrain.intensity_metric", "l1", "intensity regression metric: l1 | l2"},
    {"pretrain.head", "per_point_ball", "decoder head: per_point_ball | ball_avg | ball_max"},
    {"pretrain.loss_weighting", "per_ball", "loss averaging: per_ball | flat"},
    {"pretrain.support_mode", "points", "latent supports: points | bev"},
    {"pretrain.bev_pitch", "0.5", "BEV cell size (meters), support_mode=bev"},
    {"pretrain.neighbor_k", "16", "encoder neighborhood size"},
    {"pretrain.use_intensity_input", "true", "feed measured intensity to the encoder"},
    {"pretrain.augment_rotation", "true", "random z-rotation per scene visit"},
    {"pretrain.augment_flips", "true", "random x/y flips per scene visit"},
    {"pretrain.static_data", "false", "build each scene once (epoch-0 keys) and reuse"},
    {"pretrain.lr", "0.001", "AdamW learning rate (constant)"},
    {"pretrain.beta1", "0.9", "AdamW beta1"},
    {"pretrain.beta2", "0.999", "AdamW beta2"},
    {"pretrain.eps", "1e-8", "AdamW epsilon"},
    {"pretrain.weight_decay", "0.01", "AdamW decoupled weight decay"},

    {"probe.finetune", "false", "also update the encoder during the probe"},
    {"probe.epochs", "40", "probe training epochs"},
    {"probe.lr", "0.001", "probe base learning rate (cosine-annealed)"},
    {"probe.weight_decay", "0.01", "probe weight decay"},
    {"probe.label_fraction", "1.0",
     "fraction of labeled training scenes used; raise probe.epochs as labels shrink "
     "(0.001->1333, 0.01->667, 0.1->133, 0.5->67, 1.0->40)"},
    {"probe.train_scene_count", "32", "labeled training scenes"},
    {"probe.eval_scene_count", "8", "labeled evaluation scenes"},
    {"probe.seed", "7", "probe head init and scene subset seed"},

    {"ablate.axis", "radius", "swept axis: radius | delta | intensity | head | offset_mode | loss_weighting"},
    {"ablate.values", "0.5 1 2 4", "space-separated values for the swept axis"},
    {"ablate.seeds", "5", "independent seeds per value"},

    {"export.samples", "20000", "query samples in the PLY export"},
    {"export.sample_radius", "1.0", "support radius used when decoding samples"},
};

const SchemaEntry* find_schema(const std::string& key) {
  for (const SchemaEntry& e : kSchema)
    if (key == e.key) return &e;
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw std::runtime_error("config key '" + key + "': cannot parse '" + value +
                           "' as " + expected);
}

}  // namespace

RunConfig::RunConfig() {
  for (const SchemaEntry& e : kSchema) values_[e.key] = e.def;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream lines(text);
  std::string line;
  int line_no = 0;
  std::map<std::string, int> seen;
  while (std::getline(lines, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (auto [it, inserted] = seen.emplace(key, line_no); !inserted)
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": duplicate key '" + key + "' (first on line " +
                               std::to_string(it->second) + ")");
    cfg.set(key, value);
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (find_schema(key) == nullptr)
    throw std::runtime_error("unknown config key '" + key + "'");
  values_[key] = value;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) != 0; }

const std::string& RunConfig::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end())
    throw std::runtime_error("unknown config key '" + key + "'");
  return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  const std::string& v = raw(key);
  std::int64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    bad_value(key, v, "an integer");
  return out;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = raw(key);
  double out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out))
    bad_value(key, v, "a finite number");
  return out;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = raw(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "a boolean (true/false)");
}

std::string RunConfig::get_string(const std::string& key) const { return raw(key); }

Vec3 RunConfig::get_vec3(const std::string& key) const {
  const std::string& v = raw(key);
  std::istringstream ss(v);
  Vec3 out;
  std::string extra;
  if (!(ss >> out.x >> out.y >> out.z) || (ss >> extra))
    bad_value(key, v, "three numbers");
  if (!out.finite()) bad_value(key, v, "three finite numbers");
  return out;
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::istringstream ss(raw(key));
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

SceneConfig RunConfig::scene_config() const {
  SceneConfig s;
  s.bounds.min = get_vec3("scene.bounds_min");
  s.bounds.max = get_vec3("scene.bounds_max");
  s.ground_height = get_double("scene.ground_height");
  s.n_boxes = int(get_int("scene.n_boxes"));
  s.n_cylinders = int(get_int("scene.n_cylinders"));
  s.n_spheres = int(get_int("scene.n_spheres"));
  s.box_half_min = get_double("scene.box_half_min");
  s.box_half_max = get_double("scene.box_half_max");
  s.cyl_radius_min = get_double("scene.cyl_radius_min");
  s.cyl_radius_max = get_double("scene.cyl_radius_max");
  s.cyl_height_min = get_double("scene.cyl_height_min");
  s.cyl_height_max = get_double("scene.cyl_height_max");
  s.sph_radius_min = get_double("scene.sph_radius_min");
  s.sph_radius_max = get_double("scene.sph_radius_max");
  s.sph_float_max = get_double("scene.sph_float_max");
  s.class_intensity[kClassGround] = get_double("scene.intensity_ground");
  s.class_intensity[kClassBox] = get_double("scene.intensity_box");
  s.class_intensity[kClassCylinder] = get_double("scene.intensity_cylinder");
  s.class_intensity[kClassSphere] = get_double("scene.intensity_sphere");
  s.intensity_halfwidth = get_double("scene.intensity_halfwidth");
  s.sensor_clearance = get_double("scene.sensor_clearance");
  s.sensor_origin = get_vec3("sensor.origin");  // clearance tracks the real sensor
  s.max_placement_retries = int(get_int("scene.max_placement_retries"));
  return s;
}

SensorModel RunConfig::sensor_model() const {
  SensorModel m = SensorModel::make(
      int(get_int("sensor.n_elevation")), int(get_int("sensor.n_azimuth")),
      get_double("sensor.elevation_min_deg"), get_double("sensor.elevation_max_deg"),
      get_double("sensor.max_range"), get_vec3("sensor.origin"));
  m.range_noise_sigma = get_double("sensor.range_noise_sigma");
  m.intensity_noise_sigma = get_double("sensor.intensity_noise_sigma");
  return m;
}

namespace {

OffsetMode parse_offset_mode(const std::string& v) {
  if (v == "fixed") return OffsetMode::Fixed;
  if (v == "uniform") return OffsetMode::Uniform;
  throw std::runtime_error("config key 'pretrain.offset_mode': expected fixed|uniform, got '" + v + "'");
}

IntensityMetric parse_intensity_metric(const std::string& v) {
  if (v == "l1") return IntensityMetric::L1;
  if (v == "l2") return IntensityMetric::L2;
  throw std::runtime_error("config key 'pretrain.intensity_metric': expected l1|l2, got '" + v + "'");
}

DecodeHead parse_head(const std::string& v) {
  if (v == "per_point_ball") return DecodeHead::PerPointBall;
  if (v == "ball_avg") return DecodeHead::BallAvg;
  if (v == "ball_max") return DecodeHead::BallMax;
  throw std::runtime_error(
      "config key 'pretrain.head': expected per_point_ball|ball_avg|ball_max, got '" + v + "'");
}

LossWeighting parse_weighting(const std::string& v) {
  if (v == "per_ball") return LossWeighting::PerBall;
  if (v == "flat") return LossWeighting::Flat;
  throw std::runtime_error("config key 'pretrain.loss_weighting': expected per_ball|flat, got '" + v + "'");
}

SupportMode parse_support_mode(const std::string& v) {
  if (v == "points") return SupportMode::PointSupports;
  if (v == "bev") return SupportMode::BevGrid;
  throw std::runtime_error("config key 'pretrain.support_mode': expected points|bev, got '" + v + "'");
}

}  // namespace

PretrainConfig RunConfig::pretrain_config() const {
  PretrainConfig c;
  c.epochs = int(get_int("pretrain.epochs"));
  c.batch_size = int(get_int("pretrain.batch_size"));
  c.scene_count = int(get_int("pretrain.scene_count"));
  c.eval_scene_count = int(get_int("pretrain.eval_scene_count"));
  c.max_points = int(get_int("pretrain.max_points"));
  c.max_queries = int(get_int("pretrain.max_queries"));
  c.delta = get_double("pretrain.delta");
  c.offset_mode = parse_offset_mode(get_string("pretrain.offset_mode"));
  c.radius = get_double("pretrain.radius");
  c.lambda = get_double("pretrain.lambda");
  c.intensity_metric = parse_intensity_metric(get_string("pretrain.intensity_metric"));
  c.head = parse_head(get_string("pretrain.head"));
  c.loss_weighting = parse_weighting(get_string("pretrain.loss_weighting"));
  c.support_mode = parse_support_mode(get_string("pretrain.support_mode"));
  c.bev_pitch = get_double("pretrain.bev_pitch");
  c.neighbor_k = int(get_int("pretrain.neighbor_k"));
  c.use_intensity_input = get_bool("pretrain.use_intensity_input");
  c.augment_rotation = get_bool("pretrain.augment_rotation");
  c.augment_flips = get_bool("pretrain.augment_flips");
  c.static_data = get_bool("pretrain.static_data");
  c.threads = int(get_int("threads"));
  c.optim.lr = get_double("pretrain.lr");
  c.optim.beta1 = get_double("pretrain.beta1");
  c.optim.beta2 = get_double("pretrain.beta2");
  c.optim.eps = get_double("pretrain.eps");
  c.optim.weight_decay = get_double("pretrain.weight_decay");
  c.seed = std::uint64_t(get_int("seed"));
  return c;
}

ProbeConfig RunConfig::probe_config() const {
  ProbeConfig c;
  c.finetune = get_bool("probe.finetune");
  c.epochs = int(get_int("probe.epochs"));
  c.base_lr = get_double("probe.lr");
  c.weight_decay = get_double("probe.weight_decay");
  c.label_fraction = get_double("probe.label_fraction");
  c.train_scene_count = int(get_int("probe.train_scene_count"));
  c.eval_scene_count = int(get_int("probe.eval_scene_count"));
  c.threads = int(get_int("threads"));
  c.seed = std::uint64_t(get_int("probe.seed"));
  return c;
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(std::size(kSchema));
  for (const SchemaEntry& e : kSchema) out.emplace_back(e.key, values_.at(e.key));
  return out;
}

std::string RunConfig::documented_defaults() {
  std::ostringstream out;
  std::string section;
  for (const SchemaEntry& e : kSchema) {
    const std::string key = e.key;
    const auto dot = key.find('.');
    const std::string sec = dot == std::string::npos ? std::string() : key.substr(0, dot);
    if (sec != section) {
      out << "\n";
      section = sec;
    }
    out << e.key << " = " << e.def << "  # " << e.doc << "\n";
  }
  return out.str();
}

}  // namespace visocc
