#include "visocc/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "visocc/io.hpp"
#include "visocc/spatial_index.hpp"

namespace visocc {

namespace {

// Stream tags for key derivation. All far above any scene index, so a tagged
// derivation can never collide with a plain per-scene one.
constexpr std::uint64_t kTagScene = 0x7363656e65'01ull;
constexpr std::uint64_t kTagDownsample = 0x7363656e65'02ull;
constexpr std::uint64_t kTagAugment = 0x7363656e65'03ull;
constexpr std::uint64_t kTagQueries = 0x7363656e65'04ull;
constexpr std::uint64_t kTagSubsample = 0x7363656e65'05ull;
constexpr std::uint64_t kTagShuffle = 0x7363656e65'06ull;
constexpr std::uint64_t kTagProbeHead = 0x7363656e65'07ull;
constexpr std::uint64_t kTagProbeShuffle = 0x7363656e65'08ull;
constexpr std::uint64_t kTagProbeSubset = 0x7363656e65'09ull;
constexpr std::uint64_t kTagRandomEncoder = 0x7363656e65'0aull;
constexpr std::uint64_t kTagShuffledLabels = 0x7363656e65'0bull;
constexpr std::uint64_t kTagAblation = 0x7363656e65'0cull;

static_assert(kTrainSceneBase + kSceneRangeSpan <= kEvalSceneBase,
              "training and evaluation scene ranges must not overlap");

// Runs fn(0..n-1) on up to `threads` workers. Each index writes only its own
// output slot, so results are identical for any thread count.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn) {
  threads = std::max(1, threads);
  if (threads == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t n_workers = std::min<std::size_t>(std::size_t(threads), n);
  pool.reserve(n_workers);
  for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

std::vector<std::uint64_t> shuffled_indices(std::size_t n, std::uint64_t key) {
  std::vector<std::uint64_t> order(n);
  std::iota(order.begin(), order.end(), std::uint64_t(0));
  SplitRng rng(key);
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_int(i)]);
  return order;
}

void validate_range(const char* what, int count) {
  if (count < 0 || std::uint64_t(count) > kSceneRangeSpan)
    throw std::invalid_argument(std::string(what) +
                                " scene count outside the reserved index range");
}

}  // namespace

Scene scene_for_index(const SceneConfig& scene_cfg, std::uint64_t global_seed,
                      std::uint64_t scene_index) {
  return sample_scene(scene_cfg, derive_key(global_seed, {kTagScene, scene_index}));
}

PointCloud full_scan_for_index(const SceneConfig& scene_cfg, const SensorModel& sensor,
                               std::uint64_t global_seed, std::uint64_t scene_index) {
  const std::uint64_t scene_seed = derive_key(global_seed, {kTagScene, scene_index});
  const Scene scene = sample_scene(scene_cfg, scene_seed);
  PointCloud cloud = cast_scan(scene, sensor, scene_seed);
  snap_to_storage(cloud);
  return cloud;
}

PointCloud training_cloud_from_scan(PointCloud cloud, const PretrainConfig& cfg,
                                    std::uint64_t scene_index, int epoch,
                                    bool apply_augment) {
  cloud = downsample(cloud, std::size_t(cfg.max_points),
                     derive_key(cfg.seed, {kTagDownsample, scene_index,
                                           std::uint64_t(epoch)}));
  if (apply_augment && (cfg.augment_rotation || cfg.augment_flips)) {
    cloud = augment(cloud,
                    derive_key(cfg.seed, {kTagAugment, scene_index, std::uint64_t(epoch)}),
                    cfg.augment_rotation, cfg.augment_flips);
    snap_to_storage(cloud);
  }
  return cloud;
}

QuerySet training_queries_for_cloud(const PointCloud& cloud, const PretrainConfig& cfg,
                                    std::uint64_t scene_index, int epoch) {
  QuerySet q = generate_queries(
      cloud, cfg.delta, cfg.offset_mode,
      derive_key(cfg.seed, {kTagQueries, scene_index, std::uint64_t(epoch)}));
  q = subsample_queries(q, std::size_t(cfg.max_queries),
                        derive_key(cfg.seed, {kTagSubsample, scene_index,
                                              std::uint64_t(epoch)}));
  snap_to_storage(q);
  return q;
}

SceneSample build_scene_sample(const SceneConfig& scene_cfg, const SensorModel& sensor,
                               const PretrainConfig& cfg, std::uint64_t scene_index,
                               int epoch, bool apply_augment) {
  PointCloud cloud = full_scan_for_index(scene_cfg, sensor, cfg.seed, scene_index);
  cloud = training_cloud_from_scan(std::move(cloud), cfg, scene_index, epoch, apply_augment);
  QuerySet queries = training_queries_for_cloud(cloud, cfg, scene_index, epoch);
  return {std::move(cloud), std::move(queries)};
}

// ---- pretraining ----------------------------------------------------------------

namespace {

struct SceneVisit {
  ModelParams<float> buffers;  // values copied from the live model; grads local
  double loss = 0, occupancy = 0, intensity = 0;
  double weight = 0;  // batch combine weight: supports used (per-ball) or rows
};

// Forward + backward for one scene into visit-local gradient buffers.
SceneVisit run_scene(const ModelParams<float>& model, const SceneSample& sample,
                     const PretrainConfig& cfg) {
  SceneVisit visit{model};
  visit.buffers.zero_grad();

  DecodeTrace<float> dtrace;
  PretextLossResult<float> loss;
  if (cfg.support_mode == SupportMode::PointSupports) {
    EncodeTrace<float> etrace;
    const LatentField<float> field =
        encode(sample.cloud, visit.buffers.encoder, cfg.use_intensity_input, &etrace);
    const auto preds = decode(field, sample.queries, cfg.radius, cfg.head,
                              visit.buffers.decoder, &dtrace);
    loss = pretext_loss(preds, sample.queries, field.support_positions.size(),
                        cfg.lambda, cfg.intensity_metric, cfg.loss_weighting);
    const Tensor2<float> dlatent =
        decode_backward<float>(dtrace, visit.buffers.decoder, loss.dlogits, loss.dintensity);
    encode_backward(etrace, visit.buffers.encoder, dlatent);
  } else {
    BevTrace<float> btrace;
    const LatentField<float> field =
        encode_bev(sample.cloud, visit.buffers.encoder, cfg.bev_pitch,
                   cfg.use_intensity_input, &btrace);
    const auto preds = decode(field, sample.queries, cfg.radius, cfg.head,
                              visit.buffers.decoder, &dtrace);
    loss = pretext_loss(preds, sample.queries, field.support_positions.size(),
                        cfg.lambda, cfg.intensity_metric, cfg.loss_weighting);
    const Tensor2<float> dlatent =
        decode_backward<float>(dtrace, visit.buffers.decoder, loss.dlogits, loss.dintensity);
    encode_bev_backward(btrace, visit.buffers.encoder, dlatent);
  }

  visit.loss = loss.total;
  visit.occupancy = loss.occupancy;
  visit.intensity = loss.intensity;
  visit.weight = cfg.loss_weighting == LossWeighting::PerBall
                     ? double(loss.supports_used)
                     : double(loss.rows);
  return visit;
}

void validate_pretrain_config(const PretrainConfig& cfg) {
  if (cfg.epochs <= 0) throw std::invalid_argument("pretrain: epochs must be positive");
  if (cfg.batch_size <= 0)
    throw std::invalid_argument("pretrain: batch_size must be positive");
  if (cfg.scene_count <= 0)
    throw std::invalid_argument("pretrain: scene_count must be positive");
  validate_range("pretrain training", cfg.scene_count);
  validate_range("pretrain evaluation", cfg.eval_scene_count);
  if (cfg.max_points < cfg.neighbor_k)
    throw std::invalid_argument("pretrain: max_points below the encoder neighborhood");
  if (cfg.max_queries <= 0)
    throw std::invalid_argument("pretrain: max_queries must be positive");
  if (!(cfg.delta > 0)) throw std::invalid_argument("pretrain: delta must be positive");
  if (!(cfg.radius > 0)) throw std::invalid_argument("pretrain: radius must be positive");
  if (cfg.lambda < 0) throw std::invalid_argument("pretrain: lambda must be >= 0");
  if (cfg.support_mode == SupportMode::BevGrid && !(cfg.bev_pitch > 0))
    throw std::invalid_argument("pretrain: bev_pitch must be positive");
}

}  // namespace

PretrainResult pretrain(const SceneConfig& scene_cfg, const SensorModel& sensor,
                        const PretrainConfig& cfg,
                        const std::vector<SceneSample>* preloaded) {
  const auto t0 = std::chrono::steady_clock::now();
  validate_pretrain_config(cfg);
  if (preloaded && preloaded->size() != std::size_t(cfg.scene_count))
    throw std::invalid_argument("pretrain: preloaded sample count != scene_count");

  PretrainResult result{ModelParams<float>{}, AdamW<float>(cfg.optim), {}};
  result.model.encoder.neighbor_k = cfg.neighbor_k;
  result.model.init(cfg.seed);

  // Static datasets (and every file-driven run) are built once with epoch-0
  // keys and no augmentation; dynamic runs rebuild per visit.
  const bool static_data = cfg.static_data || preloaded != nullptr;
  std::vector<SceneSample> dataset;
  if (static_data && !preloaded) {
    dataset.resize(std::size_t(cfg.scene_count));
    parallel_for(dataset.size(), cfg.threads, [&](std::size_t i) {
      dataset[i] = build_scene_sample(scene_cfg, sensor, cfg,
                                      kTrainSceneBase + i, 0, false);
    });
  }
  const std::vector<SceneSample>* fixed = preloaded ? preloaded
                                        : static_data ? &dataset
                                                      : nullptr;

  auto model_views = result.model.param_views();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<std::uint64_t> order = shuffled_indices(
        std::size_t(cfg.scene_count),
        derive_key(cfg.seed, {kTagShuffle, std::uint64_t(epoch)}));

    double loss_num = 0, occ_num = 0, int_num = 0, weight_sum = 0;

    for (std::size_t b0 = 0; b0 < order.size(); b0 += std::size_t(cfg.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + std::size_t(cfg.batch_size));
      std::vector<SceneVisit> visits(b1 - b0);
      parallel_for(visits.size(), cfg.threads, [&](std::size_t vi) {
        const std::uint64_t local = order[b0 + vi];
        if (fixed) {
          visits[vi] = run_scene(result.model, (*fixed)[local], cfg);
        } else {
          const SceneSample sample =
              build_scene_sample(scene_cfg, sensor, cfg, kTrainSceneBase + local,
                                 epoch, cfg.augment_rotation || cfg.augment_flips);
          visits[vi] = run_scene(result.model, sample, cfg);
        }
      });

      double batch_weight = 0;
      for (const SceneVisit& v : visits) batch_weight += v.weight;
      if (!(batch_weight > 0))
        throw std::runtime_error("pretrain: batch produced no prediction rows");

      // Serial reduction in batch order keeps gradients bitwise independent
      // of the thread count.
      result.model.zero_grad();
      for (SceneVisit& v : visits) {
        const float c = float(v.weight / batch_weight);
        auto scene_views = v.buffers.param_views();
        for (std::size_t g = 0; g < model_views.size(); ++g)
          for (std::size_t i = 0; i < model_views[g].size; ++i)
            model_views[g].grad[i] += c * scene_views[g].grad[i];
        loss_num += v.weight * v.loss;
        occ_num += v.weight * v.occupancy;
        int_num += v.weight * v.intensity;
        weight_sum += v.weight;
      }
      result.optimizer.step(model_views);
    }

    EpochRow row;
    row.epoch = epoch;
    row.lr = cfg.optim.lr;
    row.loss = loss_num / weight_sum;
    row.occupancy_loss = occ_num / weight_sum;
    row.intensity_loss = int_num / weight_sum;
    result.metrics.epochs.push_back(row);
  }

  if (cfg.eval_scene_count > 0)
    result.metrics.occupancy = evaluate_occupancy(scene_cfg, sensor, cfg, result.model);

  result.metrics.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// ---- occupancy evaluation ---------------------------------------------------------

namespace {

LatentField<float> encode_by_mode(const PointCloud& cloud, const ModelParams<float>& model,
                                  const PretrainConfig& cfg) {
  return cfg.support_mode == SupportMode::PointSupports
             ? encode(cloud, model.encoder, cfg.use_intensity_input)
             : encode_bev(cloud, model.encoder, cfg.bev_pitch, cfg.use_intensity_input);
}

struct SceneEvalCounts {
  std::size_t n_queries = 0, covered = 0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t correct_true = 0, label_full = 0;
};

SceneEvalCounts eval_one_scene(const SceneConfig& scene_cfg, const SensorModel& sensor,
                               const PretrainConfig& cfg, const ModelParams<float>& model,
                               std::uint64_t scene_index) {
  const Scene scene = scene_for_index(scene_cfg, cfg.seed, scene_index);
  const SceneSample sample =
      build_scene_sample(scene_cfg, sensor, cfg, scene_index, 0, false);
  const LatentField<float> field = encode_by_mode(sample.cloud, model, cfg);
  const auto preds = decode(field, sample.queries, cfg.radius, cfg.head, model.decoder);

  const std::size_t nq = sample.queries.size();
  std::vector<double> sum(nq, 0.0);
  std::vector<std::uint32_t> cnt(nq, 0);
  for (std::size_t r = 0; r < preds.pairs.size(); ++r) {
    sum[preds.pairs[r].first] += double(preds.occupancy[r]);
    ++cnt[preds.pairs[r].first];
  }

  SceneEvalCounts out;
  out.n_queries = nq;
  for (std::size_t q = 0; q < nq; ++q) {
    if (cnt[q] == 0) continue;
    ++out.covered;
    const bool pred = sum[q] / cnt[q] > 0.5;
    const bool label = sample.queries.occupancy[q] != 0;
    out.label_full += label;
    if (pred && label) ++out.tp;
    else if (pred && !label) ++out.fp;
    else if (!pred && label) ++out.fn;
    else ++out.tn;
    const bool truth = true_occupancy(scene, sample.queries.positions[q]);
    out.correct_true += pred == truth;
  }
  return out;
}

}  // namespace

OccupancyEval evaluate_occupancy(const SceneConfig& scene_cfg, const SensorModel& sensor,
                                 const PretrainConfig& cfg,
                                 const ModelParams<float>& model) {
  validate_range("occupancy evaluation", cfg.eval_scene_count);
  std::vector<SceneEvalCounts> per_scene(std::size_t(cfg.eval_scene_count));
  parallel_for(per_scene.size(), cfg.threads, [&](std::size_t j) {
    per_scene[j] = eval_one_scene(scene_cfg, sensor, cfg, model, kEvalSceneBase + j);
  });

  SceneEvalCounts total;
  for (const SceneEvalCounts& c : per_scene) {
    total.n_queries += c.n_queries;
    total.covered += c.covered;
    total.tp += c.tp; total.fp += c.fp; total.fn += c.fn; total.tn += c.tn;
    total.correct_true += c.correct_true;
    total.label_full += c.label_full;
  }

  OccupancyEval ev;
  ev.n_queries = total.n_queries;
  ev.n_covered = total.covered;
  if (total.covered > 0) {
    ev.accuracy = double(total.tp + total.tn) / double(total.covered);
    ev.accuracy_true = double(total.correct_true) / double(total.covered);
    const std::size_t majority =
        std::max(total.label_full, total.covered - total.label_full);
    ev.majority_fraction = double(majority) / double(total.covered);
  }
  if (total.tp + total.fp > 0) ev.precision = double(total.tp) / double(total.tp + total.fp);
  if (total.tp + total.fn > 0) ev.recall = double(total.tp) / double(total.tp + total.fn);
  return ev;
}

// ---- semantic probe ----------------------------------------------------------------

namespace {

struct LabeledFeatures {
  Tensor2<float> latents;           // n x kLatentDim
  std::vector<std::uint32_t> labels;
};

LabeledFeatures features_for_scene(const SceneConfig& scene_cfg, const SensorModel& sensor,
                                   const PretrainConfig& data_cfg,
                                   const ModelParams<float>& model,
                                   std::uint64_t scene_index) {
  const SceneSample sample =
      build_scene_sample(scene_cfg, sensor, data_cfg, scene_index, 0, false);
  if (!sample.cloud.has_labels())
    throw std::runtime_error("probe: scene cloud carries no labels");
  LatentField<float> field =
      encode(sample.cloud, model.encoder, data_cfg.use_intensity_input);
  return {std::move(field.latents), sample.cloud.labels};
}

std::vector<std::uint64_t> probe_train_indices(const ProbeConfig& cfg) {
  validate_range("probe training", cfg.train_scene_count);
  validate_range("probe evaluation", cfg.eval_scene_count);
  if (!(cfg.label_fraction > 0) || cfg.label_fraction > 1.0)
    throw std::invalid_argument("probe: label_fraction must lie in (0, 1]");
  const std::size_t n = std::size_t(cfg.train_scene_count);
  std::vector<std::uint64_t> order =
      shuffled_indices(n, derive_key(cfg.seed, {kTagProbeSubset}));
  const std::size_t used = std::max<std::size_t>(
      1, std::size_t(std::llround(cfg.label_fraction * double(n))));
  order.resize(std::min(order.size(), used));
  std::sort(order.begin(), order.end());
  for (std::uint64_t& idx : order) idx += kTrainSceneBase;
  return order;
}

// One optimizer step on a single scene's points: head forward, cross-entropy,
// backward (optionally through the encoder). Returns the scene's mean loss.
struct ProbeModel {
  ModelParams<float> trunk;  // used (and updated) only when finetuning
  Linear<float> head{kLatentDim, kNumClasses};
  bool finetune = false;
};

}  // namespace

ProbeResult probe(const SceneConfig& scene_cfg, const SensorModel& sensor,
                  const PretrainConfig& data_cfg, const ProbeConfig& cfg,
                  const ModelParams<float>& model) {
  if (cfg.epochs <= 0) throw std::invalid_argument("probe: epochs must be positive");
  const std::vector<std::uint64_t> train_idx = probe_train_indices(cfg);

  ProbeModel pm;
  pm.finetune = cfg.finetune;
  pm.trunk = model;
  {
    SplitRng rng(derive_key(cfg.seed, {kTagProbeHead}));
    pm.head.init_kaiming(rng);
  }

  // Frozen probes see fixed features; cache them once.
  std::vector<LabeledFeatures> cache;
  std::vector<SceneSample> finetune_samples;
  if (!pm.finetune) {
    cache.resize(train_idx.size());
    parallel_for(cache.size(), cfg.threads, [&](std::size_t i) {
      cache[i] = features_for_scene(scene_cfg, sensor, data_cfg, model, train_idx[i]);
    });
  } else {
    finetune_samples.resize(train_idx.size());
    parallel_for(finetune_samples.size(), cfg.threads, [&](std::size_t i) {
      finetune_samples[i] =
          build_scene_sample(scene_cfg, sensor, data_cfg, train_idx[i], 0, false);
    });
  }

  std::vector<bool> class_in_train(kNumClasses, false);
  if (!pm.finetune) {
    for (const LabeledFeatures& f : cache)
      for (std::uint32_t l : f.labels)
        if (l < kNumClasses) class_in_train[l] = true;
  } else {
    for (const SceneSample& s : finetune_samples)
      for (std::uint32_t l : s.cloud.labels)
        if (l < kNumClasses) class_in_train[l] = true;
  }

  // Optimizer groups: head always; encoder layers too when finetuning.
  std::vector<ParamView<float>> views;
  if (pm.finetune) {
    pm.trunk.for_each_layer([&](const std::string& name, Linear<float>& l) {
      if (name.rfind("encoder.", 0) != 0) return;
      views.push_back({l.weight.data.data(), l.weight_grad.data.data(),
                       l.weight.data.size()});
      views.push_back({l.bias.data(), l.bias_grad.data(), l.bias.size()});
    });
  }
  views.push_back({pm.head.weight.data.data(), pm.head.weight_grad.data.data(),
                   pm.head.weight.data.size()});
  views.push_back({pm.head.bias.data(), pm.head.bias_grad.data(), pm.head.bias.size()});

  AdamW<float> opt({cfg.base_lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

  ProbeResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_lr(cosine_lr(epoch, cfg.epochs, cfg.base_lr));
    const std::vector<std::uint64_t> order = shuffled_indices(
        train_idx.size(), derive_key(cfg.seed, {kTagProbeShuffle, std::uint64_t(epoch)}));

    double loss_num = 0;
    std::size_t point_count = 0;
    for (const std::uint64_t oi : order) {
      double scene_loss;
      std::size_t scene_points;
      if (!pm.finetune) {
        const LabeledFeatures& f = cache[oi];
        const Tensor2<float> logits = linear_forward(pm.head, f.latents);
        const CeResult<float> ce = softmax_cross_entropy<float>(logits, f.labels);
        pm.head.zero_grad();
        linear_backward(pm.head, f.latents, ce.dlogits, false);
        scene_loss = ce.value;
        scene_points = f.labels.size();
      } else {
        const SceneSample& s = finetune_samples[oi];
        EncodeTrace<float> etrace;
        LatentField<float> field =
            encode(s.cloud, pm.trunk.encoder, data_cfg.use_intensity_input, &etrace);
        const Tensor2<float> logits = linear_forward(pm.head, field.latents);
        const CeResult<float> ce = softmax_cross_entropy<float>(logits, s.cloud.labels);
        pm.trunk.zero_grad();
        pm.head.zero_grad();
        const Tensor2<float> dlat = linear_backward(pm.head, field.latents, ce.dlogits);
        encode_backward(etrace, pm.trunk.encoder, dlat);
        scene_loss = ce.value;
        scene_points = s.cloud.labels.size();
      }
      opt.step(views);
      loss_num += scene_loss * double(scene_points);
      point_count += scene_points;
    }

    EpochRow row;
    row.epoch = epoch;
    row.lr = opt.config().lr;
    row.loss = point_count > 0 ? loss_num / double(point_count) : 0.0;
    result.epochs.push_back(row);
  }

  // Evaluation on the held-out scene range.
  struct Confusion {
    std::size_t tp[kNumClasses] = {}, fp[kNumClasses] = {}, fn[kNumClasses] = {};
    std::size_t correct = 0, total = 0;
    bool seen[kNumClasses] = {};
  };
  std::vector<Confusion> per_scene(std::size_t(cfg.eval_scene_count));
  const ModelParams<float>& eval_trunk = pm.finetune ? pm.trunk : model;
  parallel_for(per_scene.size(), cfg.threads, [&](std::size_t j) {
    const LabeledFeatures f = features_for_scene(scene_cfg, sensor, data_cfg,
                                                 eval_trunk, kEvalSceneBase + j);
    const Tensor2<float> logits = linear_forward(pm.head, f.latents);
    Confusion& c = per_scene[j];
    for (int i = 0; i < logits.rows; ++i) {
      int pred = 0;
      for (int k = 1; k < logits.cols; ++k)
        if (logits(i, k) > logits(i, pred)) pred = k;
      const std::uint32_t truth = f.labels[std::size_t(i)];
      c.seen[truth] = true;
      ++c.total;
      if (std::uint32_t(pred) == truth) {
        ++c.correct;
        ++c.tp[truth];
      } else {
        ++c.fp[pred];
        ++c.fn[truth];
      }
    }
  });

  Confusion total;
  for (const Confusion& c : per_scene) {
    for (int k = 0; k < kNumClasses; ++k) {
      total.tp[k] += c.tp[k];
      total.fp[k] += c.fp[k];
      total.fn[k] += c.fn[k];
      total.seen[k] = total.seen[k] || c.seen[k];
    }
    total.correct += c.correct;
    total.total += c.total;
  }

  result.class_in_train = class_in_train;
  result.class_in_eval.assign(kNumClasses, false);
  result.per_class_iou.assign(kNumClasses,
                              std::numeric_limits<double>::quiet_NaN());
  double iou_sum = 0;
  int iou_n = 0;
  for (int k = 0; k < kNumClasses; ++k) {
    result.class_in_eval[k] = total.seen[k];
    if (!total.seen[k] || !class_in_train[std::size_t(k)]) continue;
    const std::size_t uni = total.tp[k] + total.fp[k] + total.fn[k];
    const double iou = uni > 0 ? double(total.tp[k]) / double(uni) : 0.0;
    result.per_class_iou[std::size_t(k)] = iou;
    iou_sum += iou;
    ++iou_n;
  }
  result.miou = iou_n > 0 ? iou_sum / iou_n : 0.0;
  result.accuracy = total.total > 0 ? double(total.correct) / double(total.total) : 0.0;
  return result;
}

// ---- separability probes ------------------------------------------------------------

namespace {

struct BinaryTask {
  std::vector<Tensor2<float>> train_feats, eval_feats;
  std::vector<std::vector<std::uint32_t>> train_labels, eval_labels;
};

// Logistic probe over cached features; returns eval accuracy.
double run_binary_probe(const BinaryTask& task, const ProbeConfig& cfg,
                        std::uint64_t head_salt) {
  Linear<float> head(kLatentDim, 2);
  SplitRng rng(derive_key(cfg.seed, {kTagProbeHead, head_salt}));
  head.init_kaiming(rng);
  std::vector<ParamView<float>> views{
      {head.weight.data.data(), head.weight_grad.data.data(), head.weight.data.size()},
      {head.bias.data(), head.bias_grad.data(), head.bias.size()}};
  AdamW<float> opt({cfg.base_lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_lr(cosine_lr(epoch, cfg.epochs, cfg.base_lr));
    const auto order = shuffled_indices(
        task.train_feats.size(),
        derive_key(cfg.seed, {kTagProbeShuffle, head_salt, std::uint64_t(epoch)}));
    for (const std::uint64_t oi : order) {
      const Tensor2<float> logits = linear_forward(head, task.train_feats[oi]);
      const CeResult<float> ce =
          softmax_cross_entropy<float>(logits, task.train_labels[oi]);
      head.zero_grad();
      linear_backward(head, task.train_feats[oi], ce.dlogits, false);
      opt.step(views);
    }
  }

  std::size_t correct = 0, total = 0;
  for (std::size_t s = 0; s < task.eval_feats.size(); ++s) {
    const Tensor2<float> logits = linear_forward(head, task.eval_feats[s]);
    for (int i = 0; i < logits.rows; ++i) {
      const int pred = logits(i, 1) > logits(i, 0) ? 1 : 0;
      correct += std::uint32_t(pred) == task.eval_labels[s][std::size_t(i)];
      ++total;
    }
  }
  return total > 0 ? double(correct) / double(total) : 0.0;
}

}  // namespace

SeparabilityResult separability_probes(const SceneConfig& scene_cfg,
                                       const SensorModel& sensor,
                                       const PretrainConfig& data_cfg,
                                       const ProbeConfig& cfg,
                                       const ModelParams<float>& model) {
  validate_range("separability training", cfg.train_scene_count);
  validate_range("separability evaluation", cfg.eval_scene_count);

  ModelParams<float> random_model;
  random_model.encoder.neighbor_k = data_cfg.neighbor_k;
  random_model.init(derive_key(data_cfg.seed, {kTagRandomEncoder}));

  struct SceneFeats {
    Tensor2<float> trained, random;
    std::vector<std::uint32_t> ground, halfspace, shuffled;
  };
  const std::size_t n_train = std::size_t(cfg.train_scene_count);
  const std::size_t n_eval = std::size_t(cfg.eval_scene_count);
  std::vector<SceneFeats> feats(n_train + n_eval);

  parallel_for(feats.size(), cfg.threads, [&](std::size_t i) {
    const std::uint64_t idx = i < n_train ? kTrainSceneBase + i
                                          : kEvalSceneBase + (i - n_train);
    const SceneSample sample =
        build_scene_sample(scene_cfg, sensor, data_cfg, idx, 0, false);
    SceneFeats& f = feats[i];
    f.trained = encode(sample.cloud, model.encoder, data_cfg.use_intensity_input).latents;
    f.random =
        encode(sample.cloud, random_model.encoder, data_cfg.use_intensity_input).latents;
    const std::size_t n = sample.cloud.size();
    f.ground.resize(n);
    f.halfspace.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
      f.ground[p] = sample.cloud.labels[p] == kClassGround ? 1 : 0;
      f.halfspace[p] =
          sample.cloud.points[p].x > sample.cloud.sensor_origin.x ? 1 : 0;
    }
    // Shuffled-label control: destroy the feature/label pairing while
    // keeping the marginals; accuracy should fall to chance.
    f.shuffled = f.halfspace;
    const auto perm =
        shuffled_indices(n, derive_key(cfg.seed, {kTagShuffledLabels, idx}));
    std::vector<std::uint32_t> sh(n);
    for (std::size_t p = 0; p < n; ++p) sh[p] = f.shuffled[perm[p]];
    f.shuffled = std::move(sh);
  });

  auto make_task = [&](bool random_encoder,
                       std::vector<std::uint32_t> SceneFeats::*label_member) {
    BinaryTask task;
    for (std::size_t i = 0; i < feats.size(); ++i) {
      const Tensor2<float>& x = random_encoder ? feats[i].random : feats[i].trained;
      if (i < n_train) {
        task.train_feats.push_back(x);
        task.train_labels.push_back(feats[i].*label_member);
      } else {
        task.eval_feats.push_back(x);
        task.eval_labels.push_back(feats[i].*label_member);
      }
    }
    return task;
  };

  SeparabilityResult r;
  r.ground_accuracy = run_binary_probe(make_task(false, &SceneFeats::ground), cfg, 1);
  r.ground_accuracy_random_encoder =
      run_binary_probe(make_task(true, &SceneFeats::ground), cfg, 2);
  r.halfspace_accuracy =
      run_binary_probe(make_task(false, &SceneFeats::halfspace), cfg, 3);
  r.halfspace_accuracy_random_encoder =
      run_binary_probe(make_task(true, &SceneFeats::halfspace), cfg, 4);
  r.shuffled_label_accuracy =
      run_binary_probe(make_task(false, &SceneFeats::shuffled), cfg, 5);
  return r;
}

// ---- ablations -----------------------------------------------------------------------

namespace {

double parse_number(const std::string& axis, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw std::runtime_error("ablation axis '" + axis + "': bad numeric value '" + v + "'");
  }
}

void apply_axis_value(PretrainConfig& cfg, const std::string& axis, const std::string& v) {
  if (axis == "radius") {
    cfg.radius = parse_number(axis, v);
  } else if (axis == "delta") {
    cfg.delta = parse_number(axis, v);
  } else if (axis == "intensity") {
    if (v == "none") {
      cfg.use_intensity_input = false;
      cfg.lambda = 0.0;
    } else if (v == "input") {
      cfg.use_intensity_input = true;
      cfg.lambda = 0.0;
    } else if (v == "input_loss") {
      cfg.use_intensity_input = true;
      if (cfg.lambda <= 0) cfg.lambda = 1.0;
    } else {
      throw std::runtime_error("ablation axis 'intensity': expected none|input|input_loss");
    }
  } else if (axis == "head") {
    if (v == "per_point_ball") cfg.head = DecodeHead::PerPointBall;
    else if (v == "ball_avg") cfg.head = DecodeHead::BallAvg;
    else if (v == "ball_max") cfg.head = DecodeHead::BallMax;
    else throw std::runtime_error("ablation axis 'head': unknown value '" + v + "'");
  } else if (axis == "offset_mode") {
    if (v == "fixed") cfg.offset_mode = OffsetMode::Fixed;
    else if (v == "uniform") cfg.offset_mode = OffsetMode::Uniform;
    else throw std::runtime_error("ablation axis 'offset_mode': unknown value '" + v + "'");
  } else if (axis == "loss_weighting") {
    if (v == "per_ball") cfg.loss_weighting = LossWeighting::PerBall;
    else if (v == "flat") cfg.loss_weighting = LossWeighting::Flat;
    else throw std::runtime_error("ablation axis 'loss_weighting': unknown value '" + v + "'");
  } else {
    throw std::runtime_error("unknown ablation axis '" + axis + "'");
  }
}

}  // namespace

AblationTable ablation_harness(const SceneConfig& scene_cfg, const SensorModel& sensor,
                               const PretrainConfig& base, const ProbeConfig& probe_cfg,
                               const std::string& axis,
                               const std::vector<std::string>& values, int n_seeds) {
  if (n_seeds <= 0) throw std::invalid_argument("ablation: n_seeds must be positive");
  if (values.empty()) throw std::invalid_argument("ablation: no values given");

  AblationTable table;
  table.axis = axis;
  table.n_seeds = n_seeds;
  for (const std::string& v : values) {
    PretrainConfig cfg = base;
    apply_axis_value(cfg, axis, v);

    AblationCell cell;
    cell.value = v;
    for (int si = 0; si < n_seeds; ++si) {
      PretrainConfig run_cfg = cfg;
      ProbeConfig run_probe = probe_cfg;
      run_cfg.seed = derive_key(base.seed, {kTagAblation, std::uint64_t(si)});
      run_probe.seed = derive_key(probe_cfg.seed, {kTagAblation, std::uint64_t(si)});
      const PretrainResult pre = pretrain(scene_cfg, sensor, run_cfg);
      const ProbeResult pr = probe(scene_cfg, sensor, run_cfg, run_probe, pre.model);
      cell.per_seed_miou.push_back(pr.miou);
    }

    double mean = 0;
    for (double m : cell.per_seed_miou) mean += m;
    mean /= double(cell.per_seed_miou.size());
    double var = 0;
    for (double m : cell.per_seed_miou) var += (m - mean) * (m - mean);
    cell.mean = mean;
    cell.stddev = cell.per_seed_miou.size() > 1
                      ? std::sqrt(var / double(cell.per_seed_miou.size() - 1))
                      : 0.0;
    table.cells.push_back(std::move(cell));
  }
  return table;
}

}  // namespace visocc
