#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "visocc/lidar_sim.hpp"
#include "visocc/model.hpp"
#include "visocc/query_gen.hpp"

namespace visocc {

// Scene index ranges. Training and evaluation draw from disjoint seed ranges;
// the pipeline asserts the requested counts stay inside their range.
inline constexpr std::uint64_t kTrainSceneBase = 0;
inline constexpr std::uint64_t kEvalSceneBase = 1'000'000;
inline constexpr std::uint64_t kSceneRangeSpan = 1'000'000;

struct PretrainConfig {
  int epochs = 50;
  int batch_size = 4;
  int scene_count = 256;
  int eval_scene_count = 16;
  int max_points = 2048;
  int max_queries = 2048;
  double delta = 0.1;
  OffsetMode offset_mode = OffsetMode::Uniform;
  double radius = 1.0;
  double lambda = 1.0;
  IntensityMetric intensity_metric = IntensityMetric::L1;
  DecodeHead head = DecodeHead::PerPointBall;
  LossWeighting loss_weighting = LossWeighting::PerBall;
  SupportMode support_mode = SupportMode::PointSupports;
  double bev_pitch = 0.5;
  int neighbor_k = 16;
  bool use_intensity_input = true;
  bool augment_rotation = true;
  bool augment_flips = true;
  // Static data builds every scene once (epoch-0 keys) and reuses it, which
  // is what training from exported files replays.
  bool static_data = false;
  int threads = 1;
  AdamWConfig optim;  // constant lr during pretraining
  std::uint64_t seed = 42;
};

struct EpochRow {
  int epoch = 0;
  double lr = 0;
  double loss = 0, occupancy_loss = 0, intensity_loss = 0;
};

struct OccupancyEval {
  std::size_t n_queries = 0;
  std::size_t n_covered = 0;  // queries with at least one support in range
  double accuracy = 0;        // vs. visibility-derived labels, covered queries
  double precision = 0, recall = 0;
  double accuracy_true = 0;   // vs. exact scene occupancy
  double majority_fraction = 0;
};

struct MetricsReport {
  std::vector<EpochRow> epochs;
  OccupancyEval occupancy;
  double wall_seconds = 0;  // reported on stdout only; never hashed to disk
};

// One scene's training view: the (possibly augmented and downsampled) cloud
// plus its query set, both snapped to storage precision.
struct SceneSample {
  PointCloud cloud;
  QuerySet queries;
};

// Deterministic dataset construction shared by every pipeline stage. epoch
// keys the augmentation/resampling streams; passing 0 reproduces what
// exported files contain.
SceneSample build_scene_sample(const SceneConfig& scene_cfg, const SensorModel& sensor,
                               const PretrainConfig& cfg, std::uint64_t scene_index,
                               int epoch, bool apply_augment);

// The two halves of build_scene_sample past the raw scan, exposed so runs
// driven by scan/query files hit the identical code path. The input cloud
// must already be at storage precision (a freshly read scan file is).
PointCloud training_cloud_from_scan(PointCloud cloud, const PretrainConfig& cfg,
                                    std::uint64_t scene_index, int epoch,
                                    bool apply_augment);
QuerySet training_queries_for_cloud(const PointCloud& cloud, const PretrainConfig& cfg,
                                    std::uint64_t scene_index, int epoch);

Scene scene_for_index(const SceneConfig& scene_cfg, std::uint64_t global_seed,
                      std::uint64_t scene_index);

// Full (pre-downsample) scan at storage precision; what the simulate
// subcommand writes to disk for this index.
PointCloud full_scan_for_index(const SceneConfig& scene_cfg, const SensorModel& sensor,
                               std::uint64_t global_seed, std::uint64_t scene_index);

struct PretrainResult {
  ModelParams<float> model;
  AdamW<float> optimizer;
  MetricsReport metrics;
};

// Self-supervised pretraining. When preloaded is given it must hold
// scene_count samples and replaces in-process generation (file-driven runs);
// static_data is implied in that case.
PretrainResult pretrain(const SceneConfig& scene_cfg, const SensorModel& sensor,
                        const PretrainConfig& cfg,
                        const std::vector<SceneSample>* preloaded = nullptr);

// Mean predicted occupancy per query, thresholded at 0.5, on evaluation-range
// scenes the model never saw.
OccupancyEval evaluate_occupancy(const SceneConfig& scene_cfg, const SensorModel& sensor,
                                 const PretrainConfig& cfg,
                                 const ModelParams<float>& model);

struct ProbeConfig {
  bool finetune = false;  // false: frozen encoder, linear head only
  int epochs = 40;
  double base_lr = 1e-3;  // cosine-annealed to 0
  double weight_decay = 0.01;
  double label_fraction = 1.0;  // fraction of labeled training scenes used
  int train_scene_count = 32;
  int eval_scene_count = 8;
  int threads = 1;
  std::uint64_t seed = 7;
};

struct ProbeResult {
  std::vector<double> per_class_iou;  // indexed by class id; NaN when excluded
  std::vector<bool> class_in_train, class_in_eval;
  double miou = 0;      // mean IoU over classes present in eval and train
  double accuracy = 0;  // overall point accuracy on eval scenes
  std::vector<EpochRow> epochs;
};

// Per-point semantic probe on top of the encoder. Labeled training scenes
// come from the training seed range, evaluation scenes from the disjoint
// evaluation range.
ProbeResult probe(const SceneConfig& scene_cfg, const SensorModel& sensor,
                  const PretrainConfig& data_cfg, const ProbeConfig& cfg,
                  const ModelParams<float>& model);

struct SeparabilityResult {
  double ground_accuracy = 0;
  double ground_accuracy_random_encoder = 0;
  double halfspace_accuracy = 0;  // x > sensor x vs x < sensor x
  double halfspace_accuracy_random_encoder = 0;
  double shuffled_label_accuracy = 0;  // control; should sit near 0.5
};

SeparabilityResult separability_probes(const SceneConfig& scene_cfg,
                                       const SensorModel& sensor,
                                       const PretrainConfig& data_cfg,
                                       const ProbeConfig& cfg,
                                       const ModelParams<float>& model);

struct AblationCell {
  std::string value;
  std::vector<double> per_seed_miou;
  double mean = 0;
  double stddev = 0;  // sample standard deviation
};

struct AblationTable {
  std::string axis;
  int n_seeds = 0;
  std::vector<AblationCell> cells;
};

// Sweeps one axis, n_seeds pretrain+probe runs per value, downstream probe
// mIoU as the reported metric. Axes: radius, delta, intensity (values none |
// input | input_loss), head, offset_mode, loss_weighting.
AblationTable ablation_harness(const SceneConfig& scene_cfg, const SensorModel& sensor,
                               const PretrainConfig& base, const ProbeConfig& probe_cfg,
                               const std::string& axis,
                               const std::vector<std::string>& values, int n_seeds);

}  // namespace visocc
