// Command line front end. Every subcommand reads one flat config (defaults,
// then --config file, then --set overrides), writes its artifacts plus a
// summary.json and manifest.txt into out_dir, and prints a short report.
// Wall-clock timing goes to stdout only, never into hashed files.

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "visocc/io.hpp"
#include "visocc/train.hpp"

namespace fs = std::filesystem;
using namespace visocc;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  std::string out_dir;                 // overrides config out_dir when set
  std::string scans_dir;
  std::string queries_dir;
  std::string checkpoint;
  int threads = -1;
};

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) cfg = RunConfig::load(args.config_path);
  for (const std::string& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!args.out_dir.empty()) cfg.set("out_dir", args.out_dir);
  if (args.threads >= 0) cfg.set("threads", std::to_string(args.threads));
  return cfg;
}

std::string pad6(std::uint64_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06llu", static_cast<unsigned long long>(i));
  return buf;
}

void echo_config(const RunConfig& cfg, SummaryMap& summary) {
  for (const auto& [k, v] : cfg.entries()) summary["config." + k] = v;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- subcommands ------------------------------------------------------------

int cmd_defaults() {
  std::cout << RunConfig::documented_defaults();
  return 0;
}

int cmd_simulate(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = resolve_config(args);
  const SceneConfig scene_cfg = cfg.scene_config();
  const SensorModel sensor = cfg.sensor_model();
  const std::uint64_t seed = std::uint64_t(cfg.get_int("seed"));
  const std::int64_t n = cfg.get_int("simulate.scene_count");
  if (n <= 0) throw std::runtime_error("simulate.scene_count must be positive");
  const fs::path out = cfg.get_string("out_dir");
  fs::create_directories(out);

  std::vector<fs::path> written;
  std::size_t total_points = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const PointCloud cloud =
        full_scan_for_index(scene_cfg, sensor, seed, kTrainSceneBase + std::uint64_t(i));
    const fs::path stem = out / ("scan_" + pad6(std::uint64_t(i)));
    write_scan(stem, cloud);
    total_points += cloud.size();
    written.push_back(fs::path(stem).concat(".bin"));
    written.push_back(fs::path(stem).concat(".meta"));
    if (cloud.has_labels()) written.push_back(fs::path(stem).concat(".labels"));
  }

  SummaryMap summary;
  echo_config(cfg, summary);
  summary["scans"] = std::to_string(n);
  summary["total_points"] = std::to_string(total_points);
  write_summary_json(out / "summary.json", summary);
  written.push_back(out / "summary.json");
  write_manifest(out, written);

  std::cout << "wrote " << n << " scans (" << total_points << " points) to " << out
            << " in " << format_double(seconds_since(t0)) << " s\n";
  return 0;
}

int cmd_make_queries(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  if (args.scans_dir.empty()) throw std::runtime_error("make-queries needs --scans");
  const RunConfig cfg = resolve_config(args);
  const PretrainConfig pcfg = cfg.pretrain_config();
  const fs::path scans = args.scans_dir;
  const fs::path out = cfg.get_string("out_dir");
  fs::create_directories(out);

  std::vector<fs::path> written;
  std::size_t total_queries = 0;
  for (int i = 0; i < pcfg.scene_count; ++i) {
    const std::uint64_t idx = kTrainSceneBase + std::uint64_t(i);
    PointCloud cloud = read_scan(scans / ("scan_" + pad6(std::uint64_t(i))));
    cloud = training_cloud_from_scan(std::move(cloud), pcfg, idx, 0, false);
    const QuerySet q = training_queries_for_cloud(cloud, pcfg, idx, 0);
    const fs::path file = out / ("queries_" + pad6(std::uint64_t(i)) + ".vq");
    write_queries(file, q);
    total_queries += q.size();
    written.push_back(file);
  }

  SummaryMap summary;
  echo_config(cfg, summary);
  summary["query_sets"] = std::to_string(pcfg.scene_count);
  summary["total_queries"] = std::to_string(total_queries);
  write_summary_json(out / "summary.json", summary);
  written.push_back(out / "summary.json");
  write_manifest(out, written);

  std::cout << "wrote " << pcfg.scene_count << " query sets (" << total_queries
            << " queries) to " << out << " in " << format_double(seconds_since(t0))
            << " s\n";
  return 0;
}

void summarize_occupancy(const OccupancyEval& ev, SummaryMap& summary) {
  summary["occupancy.n_queries"] = std::to_string(ev.n_queries);
  summary["occupancy.n_covered"] = std::to_string(ev.n_covered);
  summary["occupancy.accuracy"] = format_double(ev.accuracy);
  summary["occupancy.precision"] = format_double(ev.precision);
  summary["occupancy.recall"] = format_double(ev.recall);
  summary["occupancy.accuracy_true"] = format_double(ev.accuracy_true);
  summary["occupancy.majority_fraction"] = format_double(ev.majority_fraction);
}

void print_occupancy(const OccupancyEval& ev) {
  std::cout << "occupancy eval: accuracy " << format_double(ev.accuracy)
            << " (majority " << format_double(ev.majority_fraction) << "), precision "
            << format_double(ev.precision) << ", recall " << format_double(ev.recall)
            << ", vs true occupancy " << format_double(ev.accuracy_true) << ", covered "
            << ev.n_covered << "/" << ev.n_queries << "\n";
}

int cmd_pretrain(const CommonArgs& args) {
  const RunConfig cfg = resolve_config(args);
  const SceneConfig scene_cfg = cfg.scene_config();
  const SensorModel sensor = cfg.sensor_model();
  const PretrainConfig pcfg = cfg.pretrain_config();
  const fs::path out = cfg.get_string("out_dir");
  fs::create_directories(out);

  // File-driven runs load what simulate/make-queries wrote; the result is
  // bit-identical to an in-process run with static data.
  std::vector<SceneSample> loaded;
  const std::vector<SceneSample>* preloaded = nullptr;
  if (!args.scans_dir.empty()) {
    const fs::path scans = args.scans_dir;
    loaded.resize(std::size_t(pcfg.scene_count));
    for (int i = 0; i < pcfg.scene_count; ++i) {
      const std::uint64_t idx = kTrainSceneBase + std::uint64_t(i);
      PointCloud cloud = read_scan(scans / ("scan_" + pad6(std::uint64_t(i))));
      cloud = training_cloud_from_scan(std::move(cloud), pcfg, idx, 0, false);
      QuerySet q =
          args.queries_dir.empty()
              ? training_queries_for_cloud(cloud, pcfg, idx, 0)
              : read_queries(fs::path(args.queries_dir) /
                             ("queries_" + pad6(std::uint64_t(i)) + ".vq"));
      loaded[std::size_t(i)] = {std::move(cloud), std::move(q)};
    }
    preloaded = &loaded;
  } else if (!args.queries_dir.empty()) {
    throw std::runtime_error("--queries requires --scans");
  }

  PretrainResult result = pretrain(scene_cfg, sensor, pcfg, preloaded);

  for (const EpochRow& row : result.metrics.epochs)
    std::cout << "epoch " << row.epoch << " loss " << format_double(row.loss)
              << " (occupancy " << format_double(row.occupancy_loss) << ", intensity "
              << format_double(row.intensity_loss) << ")\n";
  print_occupancy(result.metrics.occupancy);
  std::cout << "pretrain wall time " << format_double(result.metrics.wall_seconds)
            << " s\n";

  Checkpoint ckpt;
  ckpt.model = result.model;
  ckpt.has_optimizer = true;
  ckpt.optimizer_step = result.optimizer.step_count();
  ckpt.optimizer_config = result.optimizer.config();
  ckpt.first_moments = result.optimizer.first_moments();
  ckpt.second_moments = result.optimizer.second_moments();
  write_checkpoint(out / "model.ckpt", ckpt);
  write_metrics_csv(out / "metrics.csv", result.metrics);

  SummaryMap summary;
  echo_config(cfg, summary);
  if (!result.metrics.epochs.empty()) {
    const EpochRow& last = result.metrics.epochs.back();
    summary["final.loss"] = format_double(last.loss);
    summary["final.occupancy_loss"] = format_double(last.occupancy_loss);
    summary["final.intensity_loss"] = format_double(last.intensity_loss);
  }
  summarize_occupancy(result.metrics.occupancy, summary);
  summary["data_source"] = preloaded ? "files" : "generated";
  write_summary_json(out / "summary.json", summary);

  write_manifest(out, {out / "model.ckpt", out / "metrics.csv", out / "summary.json"});
  return 0;
}

Checkpoint load_checkpoint(const CommonArgs& args, const PretrainConfig& pcfg) {
  if (args.checkpoint.empty()) throw std::runtime_error("this subcommand needs --checkpoint");
  return read_checkpoint(args.checkpoint, pcfg.neighbor_k);
}

int cmd_eval_occ(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = resolve_config(args);
  const PretrainConfig pcfg = cfg.pretrain_config();
  const Checkpoint ckpt = load_checkpoint(args, pcfg);
  const OccupancyEval ev =
      evaluate_occupancy(cfg.scene_config(), cfg.sensor_model(), pcfg, ckpt.model);

  const fs::path out = cfg.get_string("out_dir");
  SummaryMap summary;
  echo_config(cfg, summary);
  summarize_occupancy(ev, summary);
  write_summary_json(out / "summary.json", summary);
  write_manifest(out, {out / "summary.json"});

  print_occupancy(ev);
  std::cout << "eval wall time " << format_double(seconds_since(t0)) << " s\n";
  return 0;
}

int cmd_probe(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = resolve_config(args);
  const PretrainConfig pcfg = cfg.pretrain_config();
  const ProbeConfig probe_cfg = cfg.probe_config();
  const Checkpoint ckpt = load_checkpoint(args, pcfg);
  const ProbeResult res =
      probe(cfg.scene_config(), cfg.sensor_model(), pcfg, probe_cfg, ckpt.model);

  const fs::path out = cfg.get_string("out_dir");
  MetricsReport probe_metrics;
  probe_metrics.epochs = res.epochs;
  write_metrics_csv(out / "probe_metrics.csv", probe_metrics);

  SummaryMap summary;
  echo_config(cfg, summary);
  summary["probe.miou"] = format_double(res.miou);
  summary["probe.accuracy"] = format_double(res.accuracy);
  static const char* kClassNames[kNumClasses] = {"ground", "box", "cylinder", "sphere"};
  for (int k = 0; k < kNumClasses; ++k)
    summary[std::string("probe.iou.") + kClassNames[k]] =
        format_double(res.per_class_iou[std::size_t(k)]);
  write_summary_json(out / "summary.json", summary);
  write_manifest(out, {out / "probe_metrics.csv", out / "summary.json"});

  std::cout << "probe mIoU " << format_double(res.miou) << ", accuracy "
            << format_double(res.accuracy) << "\n";
  for (int k = 0; k < kNumClasses; ++k)
    std::cout << "  IoU " << kClassNames[k] << " "
              << format_double(res.per_class_iou[std::size_t(k)]) << "\n";
  std::cout << "probe wall time " << format_double(seconds_since(t0)) << " s\n";
  return 0;
}

int cmd_separability(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = resolve_config(args);
  const PretrainConfig pcfg = cfg.pretrain_config();
  const ProbeConfig probe_cfg = cfg.probe_config();
  const Checkpoint ckpt = load_checkpoint(args, pcfg);
  const SeparabilityResult res = separability_probes(
      cfg.scene_config(), cfg.sensor_model(), pcfg, probe_cfg, ckpt.model);

  const fs::path out = cfg.get_string("out_dir");
  SummaryMap summary;
  echo_config(cfg, summary);
  summary["separability.ground"] = format_double(res.ground_accuracy);
  summary["separability.ground_random_encoder"] =
      format_double(res.ground_accuracy_random_encoder);
  summary["separability.halfspace"] = format_double(res.halfspace_accuracy);
  summary["separability.halfspace_random_encoder"] =
      format_double(res.halfspace_accuracy_random_encoder);
  summary["separability.shuffled_labels"] = format_double(res.shuffled_label_accuracy);
  write_summary_json(out / "summary.json", summary);
  write_manifest(out, {out / "summary.json"});

  std::cout << "ground " << format_double(res.ground_accuracy) << " (random encoder "
            << format_double(res.ground_accuracy_random_encoder) << ")\n"
            << "halfspace " << format_double(res.halfspace_accuracy)
            << " (random encoder "
            << format_double(res.halfspace_accuracy_random_encoder) << ")\n"
            << "shuffled labels " << format_double(res.shuffled_label_accuracy) << "\n"
            << "separability wall time " << format_double(seconds_since(t0)) << " s\n";
  return 0;
}

int cmd_ablate(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = resolve_config(args);
  const AblationTable table = ablation_harness(
      cfg.scene_config(), cfg.sensor_model(), cfg.pretrain_config(), cfg.probe_config(),
      cfg.get_string("ablate.axis"), cfg.get_list("ablate.values"),
      int(cfg.get_int("ablate.seeds")));

  const fs::path out = cfg.get_string("out_dir");
  fs::create_directories(out);
  std::string csv = "axis,value,seed,miou\n";
  for (const AblationCell& cell : table.cells)
    for (std::size_t si = 0; si < cell.per_seed_miou.size(); ++si)
      csv += table.axis + "," + cell.value + "," + std::to_string(si) + "," +
             format_double(cell.per_seed_miou[si]) + "\n";
  {
    std::ofstream f(out / "ablation.csv", std::ios::trunc);
    f << csv;
  }

  SummaryMap summary;
  echo_config(cfg, summary);
  for (const AblationCell& cell : table.cells) {
    summary["ablation." + table.axis + "." + cell.value + ".mean"] =
        format_double(cell.mean);
    summary["ablation." + table.axis + "." + cell.value + ".stddev"] =
        format_double(cell.stddev);
  }
  write_summary_json(out / "summary.json", summary);
  write_manifest(out, {out / "ablation.csv", out / "summary.json"});

  for (const AblationCell& cell : table.cells)
    std::cout << table.axis << " = " << cell.value << ": mIoU "
              << format_double(cell.mean) << " +- " << format_double(cell.stddev)
              << " over " << table.n_seeds << " seeds\n";
  std::cout << "ablation wall time " << format_double(seconds_since(t0)) << " s\n";
  return 0;
}

int cmd_export_ply(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = resolve_config(args);
  const PretrainConfig pcfg = cfg.pretrain_config();
  const Checkpoint ckpt = load_checkpoint(args, pcfg);
  const SceneConfig scene_cfg = cfg.scene_config();
  const SensorModel sensor = cfg.sensor_model();

  // First evaluation-range scene, static view.
  const SceneSample sample =
      build_scene_sample(scene_cfg, sensor, pcfg, kEvalSceneBase, 0, false);

  const std::int64_t n_samples = cfg.get_int("export.samples");
  if (n_samples <= 0) throw std::runtime_error("export.samples must be positive");
  const double sample_radius = cfg.get_double("export.sample_radius");

  // Uniform probe positions over the cloud's bounding box.
  Vec3 lo = sample.cloud.points.front(), hi = lo;
  for (const Vec3& p : sample.cloud.points) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  SplitRng rng(pcfg.seed, 0x504c59'01ull);
  QuerySet probes;
  probes.positions.resize(std::size_t(n_samples));
  probes.occupancy.assign(std::size_t(n_samples), 0);
  probes.intensity_target.assign(std::size_t(n_samples), kNoIntensity);
  probes.kind.assign(std::size_t(n_samples), QueryKind::Sight);
  probes.source_index.assign(std::size_t(n_samples), 0);
  for (auto& p : probes.positions)
    p = {rng.uniform(lo.x, hi.x), rng.uniform(lo.y, hi.y), rng.uniform(lo.z, hi.z)};

  LatentField<float> field =
      pcfg.support_mode == SupportMode::PointSupports
          ? encode(sample.cloud, ckpt.model.encoder, pcfg.use_intensity_input)
          : encode_bev(sample.cloud, ckpt.model.encoder, pcfg.bev_pitch,
                       pcfg.use_intensity_input);
  const auto preds =
      decode(field, probes, sample_radius, pcfg.head, ckpt.model.decoder);

  std::vector<double> occ_sum(std::size_t(n_samples), 0.0);
  std::vector<std::uint32_t> occ_cnt(std::size_t(n_samples), 0);
  for (std::size_t r = 0; r < preds.pairs.size(); ++r) {
    occ_sum[preds.pairs[r].first] += double(preds.occupancy[r]);
    ++occ_cnt[preds.pairs[r].first];
  }
  std::vector<double> occ(std::size_t(n_samples), 0.0);
  for (std::size_t i = 0; i < occ.size(); ++i)
    if (occ_cnt[i] > 0) occ[i] = occ_sum[i] / occ_cnt[i];

  const fs::path out = cfg.get_string("out_dir");
  fs::create_directories(out);
  export_ply(out / "scene.ply", sample.cloud, probes.positions, occ);
  write_manifest(out, {out / "scene.ply"});

  std::cout << "wrote " << out / "scene.ply" << " (" << sample.cloud.size()
            << " points + " << n_samples << " samples) in "
            << format_double(seconds_since(t0)) << " s\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"occupancy pretraining on synthetic lidar visibility"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonArgs args;
  app.add_option("--config", args.config_path, "config file (key = value lines)");
  app.add_option("--set", args.overrides, "override one config key (key=value)")
      ->take_all();
  app.add_option("--out", args.out_dir, "output directory (overrides out_dir)");
  app.add_option("--scans", args.scans_dir, "directory of scan_* files");
  app.add_option("--queries", args.queries_dir, "directory of queries_*.vq files");
  app.add_option("--checkpoint", args.checkpoint, "model checkpoint to load");
  app.add_option("--threads", args.threads, "worker threads (overrides config)");

  auto* defaults = app.add_subcommand("defaults", "print the documented default config");
  auto* simulate = app.add_subcommand("simulate", "generate scenes and write scans");
  auto* make_queries =
      app.add_subcommand("make-queries", "derive query sets from scan files");
  auto* pretrain_cmd =
      app.add_subcommand("pretrain", "self-supervised occupancy pretraining");
  auto* eval_occ =
      app.add_subcommand("eval-occ", "occupancy reconstruction eval for a checkpoint");
  auto* probe_cmd =
      app.add_subcommand("probe", "semantic linear probe on frozen features");
  auto* separability =
      app.add_subcommand("separability", "binary separability probes and controls");
  auto* ablate = app.add_subcommand("ablate", "sweep one axis with repeated seeds");
  auto* export_ply_cmd =
      app.add_subcommand("export-ply", "decode a held-out scene to a colored PLY");

  CLI11_PARSE(app, argc, argv);

  try {
    if (defaults->parsed()) return cmd_defaults();
    if (simulate->parsed()) return cmd_simulate(args);
    if (make_queries->parsed()) return cmd_make_queries(args);
    if (pretrain_cmd->parsed()) return cmd_pretrain(args);
    if (eval_occ->parsed()) return cmd_eval_occ(args);
    if (probe_cmd->parsed()) return cmd_probe(args);
    if (separability->parsed()) return cmd_separability(args);
    if (ablate->parsed()) return cmd_ablate(args);
    if (export_ply_cmd->parsed()) return cmd_export_ply(args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
