#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "visocc/model.hpp"
#include "visocc/query_gen.hpp"
#include "visocc/train.hpp"

namespace visocc {

// ---- hashing ---------------------------------------------------------------

struct Sha256 {
  void update(const void* data, std::size_t len);
  std::array<std::uint8_t, 32> finish();
  static std::string hex(const std::array<std::uint8_t, 32>& digest);

 private:
  void block(const std::uint8_t* p);
  std::uint32_t h_[8] = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                         0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
  std::uint8_t buf_[64];
  std::size_t buf_len_ = 0;
  std::uint64_t total_ = 0;
};

std::string sha256_hex(const std::string& bytes);
std::string sha256_file_hex(const std::filesystem::path& path);

// ---- storage precision ------------------------------------------------------

// Scan and query files hold 32-bit floats. Snapping in-memory data to that
// grid makes an in-process run and a files-round-trip run bit-identical.
void snap_to_storage(PointCloud& cloud);
void snap_to_storage(QuerySet& queries);

// ---- scan files -------------------------------------------------------------

// <stem>.bin: little-endian float32 (x, y, z, intensity) records.
// <stem>.meta: text sidecar (origin, counts, presence flags).
// <stem>.labels: little-endian uint32 per point, written only when labeled.
void write_scan(const std::filesystem::path& stem, const PointCloud& cloud);
PointCloud read_scan(const std::filesystem::path& stem);

// ---- query files ------------------------------------------------------------

void write_queries(const std::filesystem::path& path, const QuerySet& queries);
QuerySet read_queries(const std::filesystem::path& path);

// ---- checkpoints ------------------------------------------------------------

struct Checkpoint {
  ModelParams<float> model;
  // Optimizer state is optional; evaluation-only checkpoints omit it.
  bool has_optimizer = false;
  std::int64_t optimizer_step = 0;
  AdamWConfig optimizer_config;
  std::vector<std::vector<float>> first_moments, second_moments;
};

void write_checkpoint(const std::filesystem::path& path, Checkpoint& ckpt);
// Throws on version, checksum, or architecture (name/shape) mismatch.
Checkpoint read_checkpoint(const std::filesystem::path& path, int neighbor_k);

// ---- metrics ----------------------------------------------------------------

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report);

// Flat key -> printed value pairs, serialized as deterministic JSON. Callers
// add whatever summary fields the subcommand produced.
using SummaryMap = std::map<std::string, std::string>;
void write_summary_json(const std::filesystem::path& path, const SummaryMap& summary);

std::string format_double(double v);  // shortest round-trip decimal form

// ---- manifest ---------------------------------------------------------------

// manifest.txt: "<sha256>  <relative path>" per output file, sorted by path.
void write_manifest(const std::filesystem::path& dir,
                    const std::vector<std::filesystem::path>& files);

// ---- PLY export -------------------------------------------------------------

// ASCII PLY: the input cloud plus sampled query points colored by predicted
// occupancy. Vertex count = points + samples.
void export_ply(const std::filesystem::path& path, const PointCloud& cloud,
                const std::vector<Vec3>& sample_positions,
                const std::vector<double>& sample_occupancy);

// ---- run configuration ------------------------------------------------------

// Flat "key = value" text, '#' comments, dotted prefixes as sections. Every
// key has a schema entry with a default; unknown keys are hard errors.
class RunConfig {
 public:
  RunConfig();  // defaults

  static RunConfig load(const std::filesystem::path& path);
  static RunConfig parse(const std::string& text);

  bool has(const std::string& key) const;
  const std::string& raw(const std::string& key) const;

  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  Vec3 get_vec3(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value);  // validates key

  SceneConfig scene_config() const;
  SensorModel sensor_model() const;
  PretrainConfig pretrain_config() const;
  ProbeConfig probe_config() const;

  // Stable echo of every key (defaults included) for summaries.
  std::vector<std::pair<std::string, std::string>> entries() const;

  static std::string documented_defaults();  // rendered default config text

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace visocc
