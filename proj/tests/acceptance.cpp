// Release acceptance harness. Each check is self-contained, prints exactly one
//   [PASS] Ck: <measured numbers>
// or
//   [FAIL] Ck: <what broke>
// line, and the process exits nonzero when any selected check fails.
//
// Usage: acceptance <C1..C10|all> [path-to-cli-binary]
// The CLI path is only needed by C10, which drives the installed binary
// end to end through temporary directories.
//
// C1  query generation oracle (collinearity, offset bounds, label table)
// C2  visibility labels vs exact scene occupancy on zero-noise scans
// C3  radius search vs quadratic brute force, boundary distances included
// C4  finite-difference gradient suite, per op and full pipeline
// C5  closed-form loss values, per-ball vs flat weighting, lambda linearity
// C6  self-supervised pretraining at the full default budget
// C7  frozen-probe transfer gap, pretrained vs random encoder, 5 seeds
// C8  ablation table row structure plus the intensity ordering
// C9  decoder head ordering under the same 5-seed protocol
// C10 CLI determinism across reruns/threads and file-driven equivalence

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "visocc/geometry.hpp"
#include "visocc/lidar_sim.hpp"
#include "visocc/model.hpp"
#include "visocc/nn.hpp"
#include "visocc/query_gen.hpp"
#include "visocc/rng.hpp"
#include "visocc/spatial_index.hpp"
#include "visocc/train.hpp"

namespace {

using namespace visocc;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string strf(const char* fmt, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  va_end(ap);
  return buf;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

// ---------------------------------------------------------------------------
// C1: query generation oracle.
//
// Random sensor/point pairs, both offset modes. Every emitted query must be
// collinear with its sensor->point ray, sit inside the mode's offset bounds,
// and carry the label its kind dictates (front/sight empty, behind full).

Outcome check_query_oracle() {
  const auto t0 = Clock::now();
  constexpr double kCrossTol = 1e-9;
  constexpr double kDepthTol = 1e-9;

  std::size_t pairs = 0, checked = 0;
  for (int inst = 0; inst < 100; ++inst) {
    SplitRng rng(derive_key(0xC1A0, {std::uint64_t(inst)}));
    const Vec3 origin{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0.2, 5)};
    std::vector<Vec3> pts;
    pts.reserve(100);
    while (pts.size() < 100) {
      const Vec3 p = origin + Vec3{rng.uniform(-20, 20), rng.uniform(-20, 20),
                                   rng.uniform(-4, 4)};
      if ((p - origin).norm() > 0.05) pts.push_back(p);
    }
    const PointCloud cloud = PointCloud::make(origin, pts);
    pairs += cloud.size();
    const double delta = inst % 2 == 0 ? 0.1 : rng.uniform(0.02, 0.5);

    for (const OffsetMode mode : {OffsetMode::Fixed, OffsetMode::Uniform}) {
      const QuerySet q = generate_queries(
          cloud, delta, mode,
          derive_key(0xC1B0, {std::uint64_t(inst), mode == OffsetMode::Fixed ? 0u : 1u}));
      if (q.size() != 3 * (cloud.size() - q.skipped_points))
        return {false, strf("instance %d: %zu queries from %zu points with %zu skipped",
                            inst, q.size(), cloud.size(), q.skipped_points)};

      for (std::size_t i = 0; i < q.size(); ++i) {
        const Vec3 p = cloud.points[q.source_index[i]];
        const Vec3 u = q.positions[i] - origin;
        const Vec3 v = p - origin;
        const double cross = u.cross(v).norm();
        if (cross > kCrossTol)
          return {false, strf("instance %d query %zu: cross-product norm %.3e > %.0e",
                              inst, i, cross, kCrossTol)};

        const double along = (q.positions[i] - p).norm();  // distance to the source point
        const double d_sensor = u.norm(), d_point = v.norm();
        bool ok = false;
        switch (q.kind[i]) {
          case QueryKind::Front:
            ok = q.occupancy[i] == 0 && along > 0 && along <= delta + kDepthTol &&
                 d_sensor > 0 && d_sensor < d_point;
            if (mode == OffsetMode::Fixed) ok = ok && std::abs(along - delta) <= kDepthTol;
            break;
          case QueryKind::Behind:
            ok = q.occupancy[i] == 1 && along > 0 && along <= delta + kDepthTol &&
                 d_sensor > d_point;
            if (mode == OffsetMode::Fixed) ok = ok && std::abs(along - delta) <= kDepthTol;
            break;
          case QueryKind::Sight:
            ok = q.occupancy[i] == 0 && d_sensor > 0 && along > 0 &&
                 d_sensor < d_point && along < d_point;
            break;
        }
        if (!ok)
          return {false, strf("instance %d query %zu (kind %d): label/offset bounds violated",
                              inst, i, int(q.kind[i]))};
        ++checked;
      }
    }
  }

  const double dt = seconds_since(t0);
  const bool pass = pairs >= 10000 && dt < 5.0;
  return {pass, strf("%zu sensor/point pairs, both offset modes, %zu queries: "
                     "collinearity <= 1e-9, offset bounds and label table hold; %.2f s "
                     "(bound 5 s)",
                     pairs, checked, dt)};
}

// ---------------------------------------------------------------------------
// C2: visibility labels against exact scene occupancy on zero-noise scans.

Outcome check_label_soundness() {
  const auto t0 = Clock::now();
  const SceneConfig scene_cfg;
  SensorModel sensor = SensorModel::default_sensor();
  sensor.range_noise_sigma = 0;
  sensor.intensity_noise_sigma = 0;

  std::size_t agree = 0, total = 0;
  for (int i = 0; i < 50; ++i) {
    const Scene scene = sample_scene(scene_cfg, derive_key(0xC2A0, {std::uint64_t(i)}));
    const PointCloud cloud = cast_scan(scene, sensor, derive_key(0xC2B0, {std::uint64_t(i)}));
    const QuerySet q = generate_queries(cloud, 0.1, OffsetMode::Uniform,
                                        derive_key(0xC2C0, {std::uint64_t(i)}));
    for (std::size_t k = 0; k < q.size(); ++k) {
      agree += q.occupancy[k] == (true_occupancy(scene, q.positions[k]) ? 1 : 0);
      ++total;
    }
  }

  const double rate = double(agree) / double(total);
  const double dt = seconds_since(t0);
  const bool pass = rate >= 0.95 && dt < 60.0;
  return {pass, strf("labels agree with exact occupancy on %.2f%% of %zu queries over 50 "
                     "zero-noise scenes at delta 0.1 (bound 95%%); %.1f s (bound 60 s)",
                     100 * rate, total, dt)};
}

// ---------------------------------------------------------------------------
// C3: radius search equals quadratic brute force, boundary distances included.

Outcome check_index_exactness() {
  const auto t0 = Clock::now();
  std::size_t instances = 0, pair_total = 0, boundary_total = 0;

  for (int inst = 0; inst < 100; ++inst) {
    SplitRng rng(derive_key(0xC3A0, {std::uint64_t(inst)}));
    const bool exact_lattice = inst % 5 == 0;
    const std::size_t n = inst == 0 ? 2000 : 1 + rng.uniform_int(2000);
    const std::size_t m = inst == 0 ? 6000 : 1 + rng.uniform_int(6000);

    double r;
    std::vector<Vec3> supports(n), queries(m);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> constructed;

    if (exact_lattice) {
      // Integer coordinates and a radius the lattice arithmetic keeps exact,
      // so constructed boundary pairs sit at distance r with no rounding.
      const double radii[] = {0.5, 1.0, 1.5, 2.0};
      r = radii[rng.uniform_int(4)];
      auto lattice = [&rng] {
        return Vec3{double(int(rng.uniform_int(21)) - 10),
                    double(int(rng.uniform_int(21)) - 10),
                    double(int(rng.uniform_int(21)) - 10)};
      };
      for (Vec3& p : supports) p = lattice();
      const std::size_t n_boundary = std::min<std::size_t>(m, 8);
      for (std::size_t j = 0; j + n_boundary < m; ++j) queries[j] = lattice();
      for (std::size_t b = 0; b < n_boundary; ++b) {
        const std::uint32_t s = std::uint32_t(rng.uniform_int(n));
        Vec3 q = supports[s];
        const int axis = int(rng.uniform_int(3));
        (axis == 0 ? q.x : axis == 1 ? q.y : q.z) += r;
        queries[m - n_boundary + b] = q;
        constructed.push_back({std::uint32_t(m - n_boundary + b), s});
      }
      boundary_total += n_boundary;
    } else {
      const double half = rng.uniform(2, 20);
      r = rng.uniform(0.05 * half, 0.4 * half);
      for (Vec3& p : supports)
        p = {rng.uniform(-half, half), rng.uniform(-half, half), rng.uniform(-half, half)};
      for (Vec3& q : queries)
        q = {rng.uniform(-half, half), rng.uniform(-half, half), rng.uniform(-half, half)};
    }

    for (const IndexMetric metric : {IndexMetric::Ball3d, IndexMetric::CylinderBev}) {
      const double cell = r * rng.uniform(0.3, 2.5);
      const SpatialIndex index(supports, cell, metric);
      const auto got = index.radius_pairs(queries, r);

      std::vector<std::pair<std::uint32_t, std::uint32_t>> want;
      const double r2 = r * r;
      for (std::uint32_t qi = 0; qi < m; ++qi)
        for (std::uint32_t si = 0; si < n; ++si)
          if (SpatialIndex::distance2(queries[qi], supports[si], metric) <= r2)
            want.push_back({qi, si});

      if (got != want)
        return {false, strf("instance %d metric %d: %zu pairs from the index, %zu from "
                            "brute force",
                            inst, int(metric), got.size(), want.size())};
      for (const auto& pr : constructed)
        if (!std::binary_search(got.begin(), got.end(), pr))
          return {false, strf("instance %d metric %d: boundary pair (%u,%u) at exactly r "
                              "missing",
                              inst, int(metric), pr.first, pr.second)};
      pair_total += got.size();
    }
    ++instances;
  }

  const double dt = seconds_since(t0);
  const bool pass = instances == 100 && dt < 60.0;
  return {pass, strf("%zu instances up to 2000x6000, ball and cylinder metrics, "
                     "%zu pairs matched brute force exactly, %zu constructed boundary "
                     "pairs at r all present; %.1f s (bound 60 s)",
                     instances, pair_total, boundary_total, dt)};
}

// ---------------------------------------------------------------------------
// C4: central finite differences against every analytic gradient, then the
// full encode -> decode -> loss composition. 64-bit throughout.

struct GradStats {
  double max_err = 0;
  double worst_analytic = 0, worst_numeric = 0;
  std::string worst_tag;
  std::size_t checks = 0;

  void add(double analytic, double numeric, const std::string& tag = {}) {
    const double err = std::abs(analytic - numeric) /
                       std::max({1.0, std::abs(analytic), std::abs(numeric)});
    if (err > max_err) {
      max_err = err;
      worst_analytic = analytic;
      worst_numeric = numeric;
      worst_tag = tag;
    }
    ++checks;
  }
  bool ok() const { return max_err <= 1e-4; }
};

double central_fd(double* slot, const std::function<double()>& f) {
  const double h = 1e-6;
  const double saved = *slot;
  *slot = saved + h;
  const double up = f();
  *slot = saved - h;
  const double down = f();
  *slot = saved;
  return (up - down) / (2 * h);
}

double dotv(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_linear_grads(GradStats& gs) {
  for (int inst = 0; inst < 20; ++inst) {
    SplitRng rng(derive_key(0xC401, {std::uint64_t(inst)}));
    const int in = 1 + int(rng.uniform_int(6));
    const int out = 1 + int(rng.uniform_int(5));
    const int rows = 1 + int(rng.uniform_int(7));
    Linear<double> layer(in, out);
    for (double& v : layer.weight.data) v = rng.uniform(-2, 2);
    for (double& v : layer.bias) v = rng.uniform(-2, 2);
    Tensor2<double> x(rows, in), c(rows, out);
    for (double& v : x.data) v = rng.uniform(-2, 2);
    for (double& v : c.data) v = rng.uniform(-1, 1);

    const auto f = [&] { return dotv(linear_forward(layer, x).data, c.data); };
    layer.zero_grad();
    const Tensor2<double> dx = linear_backward(layer, x, c, true);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      gs.add(dx.data[i], central_fd(&x.data[i], f));
    for (std::size_t i = 0; i < layer.weight.data.size(); ++i)
      gs.add(layer.weight_grad.data[i], central_fd(&layer.weight.data[i], f));
    for (std::size_t i = 0; i < layer.bias.size(); ++i)
      gs.add(layer.bias_grad[i], central_fd(&layer.bias[i], f));
  }
}

void check_relu_grads(GradStats& gs) {
  for (int inst = 0; inst < 20; ++inst) {
    SplitRng rng(derive_key(0xC402, {std::uint64_t(inst)}));
    const int rows = 1 + int(rng.uniform_int(8)), cols = 1 + int(rng.uniform_int(6));
    Tensor2<double> x(rows, cols), c(rows, cols);
    // keep inputs away from the kink so the two-sided difference is clean
    for (double& v : x.data) v = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.05, 2);
    for (double& v : c.data) v = rng.uniform(-1, 1);

    const auto f = [&] { return dotv(relu_forward(x).data, c.data); };
    const Tensor2<double> y = relu_forward(x);
    const Tensor2<double> dx = relu_backward(y, c);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      gs.add(dx.data[i], central_fd(&x.data[i], f));
  }
}

void check_sigmoid_grads(GradStats& gs) {
  for (int inst = 0; inst < 20; ++inst) {
    SplitRng rng(derive_key(0xC403, {std::uint64_t(inst)}));
    const std::size_t n = 1 + rng.uniform_int(12);
    std::vector<double> x(n), c(n);
    for (double& v : x) v = rng.uniform(-4, 4);
    for (double& v : c) v = rng.uniform(-1, 1);

    const auto f = [&] { return dotv(sigmoid_forward(std::span<const double>(x)), c); };
    const std::vector<double> y = sigmoid_forward(std::span<const double>(x));
    for (std::size_t i = 0; i < n; ++i)
      gs.add(c[i] * y[i] * (1 - y[i]), central_fd(&x[i], f));
  }
}

std::vector<int> random_offsets(SplitRng& rng, int rows) {
  const int segments = 1 + int(rng.uniform_int(std::min(4, rows)));
  std::vector<int> cuts;
  while (int(cuts.size()) < segments - 1) {
    const int cut = 1 + int(rng.uniform_int(std::uint64_t(rows - 1)));
    if (std::find(cuts.begin(), cuts.end(), cut) == cuts.end()) cuts.push_back(cut);
  }
  std::sort(cuts.begin(), cuts.end());
  std::vector<int> offsets{0};
  offsets.insert(offsets.end(), cuts.begin(), cuts.end());
  offsets.push_back(rows);
  return offsets;
}

void check_maxpool_grads(GradStats& gs) {
  for (int inst = 0; inst < 20; ++inst) {
    SplitRng rng(derive_key(0xC404, {std::uint64_t(inst)}));
    const int rows = 2 + int(rng.uniform_int(9)), cols = 1 + int(rng.uniform_int(6));
    const std::vector<int> offsets = random_offsets(rng, rows);
    const int segments = int(offsets.size()) - 1;

    // resample until each segment's per-column winner is clear of the runner-up,
    // otherwise the +-h probes can flip the argmax
    Tensor2<double> x(rows, cols);
    for (int attempt = 0;; ++attempt) {
      for (double& v : x.data) v = rng.uniform(-3, 3);
      bool clear = true;
      for (int g = 0; g < segments && clear; ++g)
        for (int col = 0; col < cols && clear; ++col) {
          double best = -1e300, second = -1e300;
          for (int row = offsets[g]; row < offsets[g + 1]; ++row) {
            const double v = x(row, col);
            if (v > best) {
              second = best;
              best = v;
            } else if (v > second) {
              second = v;
            }
          }
          clear = offsets[g + 1] - offsets[g] < 2 || best - second > 1e-4;
        }
      if (clear || attempt > 100) break;
    }
    Tensor2<double> c(segments, cols);
    for (double& v : c.data) v = rng.uniform(-1, 1);

    const auto f = [&] {
      return dotv(maxpool_rows(x, offsets, nullptr).data, c.data);
    };
    Tensor2<int> argmax;
    maxpool_rows(x, offsets, &argmax);
    const Tensor2<double> dx = maxpool_rows_backward(argmax, rows, c);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      gs.add(dx.data[i], central_fd(&x.data[i], f));
  }
}

void check_avgpool_grads(GradStats& gs) {
  for (int inst = 0; inst < 20; ++inst) {
    SplitRng rng(derive_key(0xC405, {std::uint64_t(inst)}));
    const int rows = 2 + int(rng.uniform_int(9)), cols = 1 + int(rng.uniform_int(6));
    const std::vector<int> offsets = random_offsets(rng, rows);
    const int segments = int(offsets.size()) - 1;
    Tensor2<double> x(rows, cols), c(segments, cols);
    for (double& v : x.data) v = rng.uniform(-3, 3);
    for (double& v : c.data) v = rng.uniform(-1, 1);

    const auto f = [&] { return dotv(avgpool_rows(x, offsets).data, c.data); };
    const Tensor2<double> dx = avgpool_rows_backward(offsets, rows, c);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      gs.add(dx.data[i], central_fd(&x.data[i], f));
  }
}

void check_bce_grads(GradStats& gs) {
  for (int inst = 0; inst < 20; ++inst) {
    SplitRng rng(derive_key(0xC406, {std::uint64_t(inst)}));
    const std::size_t n = 1 + rng.uniform_int(12);
    std::vector<double> logits(n), weights(n);
    std::vector<std::uint8_t> targets(n);
    for (double& v : logits) v = rng.uniform(-3, 3);
    for (double& v : weights) v = rng.uniform(0.05, 2);
    for (auto& t : targets) t = rng.uniform() < 0.5 ? 0 : 1;

    const auto f = [&] {
      return bce_with_logits(std::span<const double>(logits),
                             std::span<const std::uint8_t>(targets),
                             std::span<const double>(weights))
          .value;
    };
    const auto res = bce_with_logits(std::span<const double>(logits),
                                     std::span<const std::uint8_t>(targets),
                                     std::span<const double>(weights));
    for (std::size_t i = 0; i < n; ++i) gs.add(res.grad[i], central_fd(&logits[i], f));
  }
}

void check_regression_grads(GradStats& gs, bool l1) {
  for (int inst = 0; inst < 20; ++inst) {
    SplitRng rng(derive_key(l1 ? 0xC407 : 0xC408, {std::uint64_t(inst)}));
    const std::size_t n = 1 + rng.uniform_int(12);
    std::vector<double> pred(n), target(n), weights;
    std::vector<std::uint8_t> mask(n);
    for (std::size_t i = 0; i < n; ++i) {
      target[i] = rng.uniform(-1, 1);
      // the absolute-error branch is non-smooth at zero residual; keep clear
      pred[i] = target[i] + (rng.uniform() < 0.5 ? -1 : 1) *
                                (l1 ? rng.uniform(0.1, 1.5) : rng.uniform(0, 2));
      mask[i] = rng.uniform() < 0.7 ? 1 : 0;
    }
    mask[0] = 1;
    if (inst % 2 == 1) {
      weights.resize(n);
      for (double& w : weights) w = rng.uniform(0.05, 2);
    }

    const auto run = [&] {
      return l1 ? l1_loss(std::span<const double>(pred), std::span<const double>(target),
                          std::span<const std::uint8_t>(mask),
                          std::span<const double>(weights))
                : l2_loss(std::span<const double>(pred), std::span<const double>(target),
                          std::span<const std::uint8_t>(mask),
                          std::span<const double>(weights));
    };
    const auto f = [&] { return run().value; };
    const auto res = run();
    for (std::size_t i = 0; i < n; ++i) gs.add(res.grad[i], central_fd(&pred[i], f));
  }
}

void check_softmax_ce_grads(GradStats& gs) {
  for (int inst = 0; inst < 20; ++inst) {
    SplitRng rng(derive_key(0xC409, {std::uint64_t(inst)}));
    const int rows = 1 + int(rng.uniform_int(8)), classes = 2 + int(rng.uniform_int(4));
    Tensor2<double> logits(rows, classes);
    for (double& v : logits.data) v = rng.uniform(-3, 3);
    std::vector<std::uint32_t> labels(std::size_t(rows), 0u);
    for (auto& l : labels) l = std::uint32_t(rng.uniform_int(std::uint64_t(classes)));

    const auto f = [&] {
      return softmax_cross_entropy(logits, std::span<const std::uint32_t>(labels)).value;
    };
    const auto res = softmax_cross_entropy(logits, std::span<const std::uint32_t>(labels));
    for (std::size_t i = 0; i < logits.data.size(); ++i)
      gs.add(res.dlogits.data[i], central_fd(&logits.data[i], f));
  }
}

struct PipelineCase {
  PointCloud cloud;
  QuerySet queries;
  SupportMode support = SupportMode::PointSupports;
  DecodeHead head = DecodeHead::PerPointBall;
  LossWeighting weighting = LossWeighting::PerBall;
  IntensityMetric metric = IntensityMetric::L1;
  double lambda = 1.0, radius = 2.0, pitch = 1.0;
  bool use_intensity = true;
};

double pipeline_loss(const PipelineCase& pc, ModelParams<double>& m) {
  const LatentField<double> field =
      pc.support == SupportMode::BevGrid
          ? encode_bev(pc.cloud, m.encoder, pc.pitch, pc.use_intensity)
          : encode(pc.cloud, m.encoder, pc.use_intensity);
  const DecodePredictions<double> preds =
      decode(field, pc.queries, pc.radius, pc.head, m.decoder);
  return pretext_loss(preds, pc.queries, field.support_positions.size(), pc.lambda,
                      pc.metric, pc.weighting)
      .total;
}

double pipeline_backward(const PipelineCase& pc, ModelParams<double>& m) {
  m.zero_grad();
  EncodeTrace<double> et;
  BevTrace<double> bt;
  DecodeTrace<double> dt;
  const bool bev = pc.support == SupportMode::BevGrid;
  const LatentField<double> field =
      bev ? encode_bev(pc.cloud, m.encoder, pc.pitch, pc.use_intensity, &bt)
          : encode(pc.cloud, m.encoder, pc.use_intensity, &et);
  const DecodePredictions<double> preds =
      decode(field, pc.queries, pc.radius, pc.head, m.decoder, &dt);
  const PretextLossResult<double> loss =
      pretext_loss(preds, pc.queries, field.support_positions.size(), pc.lambda,
                   pc.metric, pc.weighting);
  const Tensor2<double> dlat =
      decode_backward(dt, m.decoder, std::span<const double>(loss.dlogits),
                      std::span<const double>(loss.dintensity));
  if (bev)
    encode_bev_backward(bt, m.encoder, dlat);
  else
    encode_backward(et, m.encoder, dlat);
  return loss.total;
}

void check_pipeline_grads(GradStats& gs) {
  for (int inst = 0; inst < 24; ++inst) {
    SplitRng rng(derive_key(0xC410, {std::uint64_t(inst)}));
    const int n = 12 + int(rng.uniform_int(5));
    std::vector<Vec3> pts;
    std::vector<double> intens;
    for (int i = 0; i < n; ++i) {
      const double a = 2 * std::numbers::pi * (double(i) + rng.uniform()) / double(n);
      const double rad = 1.0 + rng.uniform(-0.3, 0.5);
      pts.push_back({rad * std::cos(a), rad * std::sin(a), rng.uniform(-0.4, 0.4)});
      intens.push_back(rng.uniform(0.05, 0.95));
    }
    const bool with_intensity = inst % 7 != 3;

    PipelineCase pc;
    pc.cloud = PointCloud::make({0, 0, 1.6}, pts,
                                with_intensity ? intens : std::vector<double>{});
    pc.queries =
        generate_queries(pc.cloud, 0.35,
                         inst % 2 ? OffsetMode::Uniform : OffsetMode::Fixed,
                         derive_key(0xC411, {std::uint64_t(inst)}));
    pc.head = static_cast<DecodeHead>(inst % 3);
    pc.weighting = static_cast<LossWeighting>((inst / 3) % 2);
    pc.metric = static_cast<IntensityMetric>((inst / 6) % 2);
    pc.support = inst % 5 == 4 ? SupportMode::BevGrid : SupportMode::PointSupports;
    const double lambdas[] = {0.5, 0.75, 0.0, 1.25};
    pc.lambda = lambdas[inst % 4];
    pc.use_intensity = with_intensity && inst % 7 != 5;

    ModelParams<double> m;
    m.encoder.neighbor_k = 3;
    m.init(derive_key(0xC412, {std::uint64_t(inst)}));
    // Freshly initialized biases are zero, which parks the all-zero
    // self-neighbor row of the no-intensity path exactly on the relu kink.
    // The subgradient there is a valid choice but central differences are
    // not; jitter the biases so every probe lands on a differentiable point.
    SplitRng jitter(derive_key(0xC414, {std::uint64_t(inst)}));
    m.for_each_layer([&](const std::string&, Linear<double>& layer) {
      for (double& b : layer.bias) b = jitter.uniform(-0.05, 0.05);
    });
    pipeline_backward(pc, m);

    SplitRng coords(derive_key(0xC413, {std::uint64_t(inst)}));
    GradStats local;
    std::size_t view_idx = 0;
    for (const ParamView<double>& view : m.param_views()) {
      for (int s = 0; s < 3; ++s) {
        const std::size_t j = coords.uniform_int(view.size);
        const double numeric =
            central_fd(&view.value[j], [&] { return pipeline_loss(pc, m); });
        local.add(view.grad[j], numeric,
                  strf("instance %d view %zu coord %zu (head %d support %d)", inst,
                       view_idx, j, int(pc.head), int(pc.support)));
      }
      ++view_idx;
    }
    if (std::getenv("VISOCC_GRAD_DEBUG"))
      std::fprintf(stderr, "grad debug: instance %d head %d support %d weighting %d "
                           "metric %d lambda %.2f intensity %d: max err %.3e (%s)\n",
                   inst, int(pc.head), int(pc.support), int(pc.weighting),
                   int(pc.metric), pc.lambda, int(pc.use_intensity), local.max_err,
                   local.worst_tag.c_str());
    if (local.max_err > gs.max_err) {
      gs.worst_analytic = local.worst_analytic;
      gs.worst_numeric = local.worst_numeric;
      gs.worst_tag = local.worst_tag;
      gs.max_err = local.max_err;
    }
    gs.checks += local.checks;
  }
}

Outcome check_gradient_suite() {
  const auto t0 = Clock::now();
  GradStats ops, pipeline;
  check_linear_grads(ops);
  check_relu_grads(ops);
  check_sigmoid_grads(ops);
  check_maxpool_grads(ops);
  check_avgpool_grads(ops);
  check_bce_grads(ops);
  check_regression_grads(ops, true);
  check_regression_grads(ops, false);
  check_softmax_ce_grads(ops);
  check_pipeline_grads(pipeline);

  const double dt = seconds_since(t0);
  const bool pass = ops.ok() && pipeline.ok() && dt < 120.0;
  std::string detail =
      strf("9 kernel ops, 20 instances each: max rel err %.2e over %zu coordinates; "
           "full encode/decode/loss composition, 24 instances: max rel err %.2e over "
           "%zu coordinates (gate 1e-4); %.1f s (bound 120 s)",
           ops.max_err, ops.checks, pipeline.max_err, pipeline.checks, dt);
  if (!pass)
    detail += strf("; worst: %s analytic %.6e vs numeric %.6e",
                   (pipeline.max_err >= ops.max_err ? pipeline : ops).worst_tag.c_str(),
                   (pipeline.max_err >= ops.max_err ? pipeline : ops).worst_analytic,
                   (pipeline.max_err >= ops.max_err ? pipeline : ops).worst_numeric);
  return {pass, detail};
}

// ---------------------------------------------------------------------------
// C5: closed-form loss values, the two-support weighting example, and lambda
// linearity of the combined objective.

double bce_row(double x, double t) {
  return std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
}

QuerySet hand_query_set(std::vector<Vec3> pos, std::vector<std::uint8_t> occ,
                        std::vector<double> intens, std::vector<QueryKind> kind) {
  QuerySet q;
  q.positions = std::move(pos);
  q.occupancy = std::move(occ);
  q.intensity_target = std::move(intens);
  q.kind = std::move(kind);
  q.source_index.assign(q.positions.size(), 0);
  q.validate();
  return q;
}

bool lambda_linearity_holds(const DecodePredictions<double>& preds, const QuerySet& q,
                            std::size_t n_supports, LossWeighting weighting,
                            std::string* err) {
  const auto base = pretext_loss(preds, q, n_supports, 1.0, IntensityMetric::L1, weighting);
  for (const double lambda : {0.0, 0.3, 2.5}) {
    const auto scaled =
        pretext_loss(preds, q, n_supports, lambda, IntensityMetric::L1, weighting);
    const bool ok =
        std::abs(scaled.occupancy - base.occupancy) <= 1e-12 &&
        std::abs(scaled.intensity - base.intensity) <= 1e-12 &&
        std::abs(scaled.total - (base.occupancy + lambda * base.intensity)) <= 1e-12;
    if (!ok) {
      *err = strf("lambda %.1f: total %.17g vs occupancy %.17g + lambda*intensity %.17g",
                  lambda, scaled.total, base.occupancy, base.intensity);
      return false;
    }
    for (std::size_t i = 0; i < base.dlogits.size(); ++i)
      if (std::abs(scaled.dlogits[i] - base.dlogits[i]) > 1e-12) {
        *err = strf("lambda %.1f: occupancy gradient row %zu moved", lambda, i);
        return false;
      }
    for (std::size_t i = 0; i < base.dintensity.size(); ++i)
      if (std::abs(scaled.dintensity[i] - lambda * base.dintensity[i]) > 1e-12) {
        *err = strf("lambda %.1f: intensity gradient row %zu not scaled linearly", lambda, i);
        return false;
      }
  }
  return true;
}

Outcome check_loss_values() {
  // ln 2 at zero logit, both targets, unit weight.
  for (const std::uint8_t t : {std::uint8_t(0), std::uint8_t(1)}) {
    const double logit = 0.0, w = 1.0;
    const auto res = bce_with_logits(std::span<const double>(&logit, 1),
                                     std::span<const std::uint8_t>(&t, 1),
                                     std::span<const double>(&w, 1));
    if (std::abs(res.value - std::numbers::ln2) > 1e-9)
      return {false, strf("bce(0, %d, 1) = %.17g, expected ln 2", int(t), res.value)};
  }

  // Hand-worked two-support example: support 0 carries three rows (two with
  // intensity targets), support 1 one row. No symmetry anywhere.
  DecodePredictions<double> preds;
  preds.pairs = {{0, 0}, {1, 0}, {2, 0}, {3, 1}};
  preds.logits = {2.0, -1.0, 0.5, -0.25};
  preds.intensity = {0.6, 0.1, 0.9, 0.4};
  preds.occupancy = sigmoid_forward(std::span<const double>(preds.logits));
  const QuerySet q = hand_query_set(
      {{0, 0, 0}, {0.1, 0, 0}, {0.2, 0, 0}, {5, 0, 0}}, {0, 1, 0, 1},
      {0.3, 0.7, kNoIntensity, 0.5},
      {QueryKind::Front, QueryKind::Behind, QueryKind::Sight, QueryKind::Behind});

  const auto per_ball = pretext_loss(preds, q, 4, 1.0, IntensityMetric::L1,
                                     LossWeighting::PerBall);
  const double occ_s0 = (bce_row(2, 0) + bce_row(-1, 1) + bce_row(0.5, 0)) / 3;
  const double occ_s1 = bce_row(-0.25, 1);
  const double int_s0 = (std::abs(0.6 - 0.3) + std::abs(0.1 - 0.7)) / 2;
  const double int_s1 = std::abs(0.4 - 0.5);
  if (per_ball.supports_used != 2 || per_ball.rows != 4 || per_ball.intensity_rows != 3 ||
      per_ball.supports_with_intensity != 2)
    return {false, "per-ball bookkeeping differs from the hand-worked example"};
  if (std::abs(per_ball.occupancy - (occ_s0 + occ_s1) / 2) > 1e-12 ||
      std::abs(per_ball.intensity - (int_s0 + int_s1) / 2) > 1e-12 ||
      std::abs(per_ball.total - (per_ball.occupancy + per_ball.intensity)) > 1e-12)
    return {false, strf("per-ball losses (%.17g, %.17g) differ from the hand-worked "
                        "(%.17g, %.17g)",
                        per_ball.occupancy, per_ball.intensity, (occ_s0 + occ_s1) / 2,
                        (int_s0 + int_s1) / 2)};

  const auto flat = pretext_loss(preds, q, 4, 1.0, IntensityMetric::L1,
                                 LossWeighting::Flat);
  const double occ_flat =
      (bce_row(2, 0) + bce_row(-1, 1) + bce_row(0.5, 0) + bce_row(-0.25, 1)) / 4;
  const double int_flat =
      (std::abs(0.6 - 0.3) + std::abs(0.1 - 0.7) + std::abs(0.4 - 0.5)) / 3;
  if (std::abs(flat.occupancy - occ_flat) > 1e-12 ||
      std::abs(flat.intensity - int_flat) > 1e-12)
    return {false, "flat-mean losses differ from the hand-worked example"};
  if (flat.occupancy == per_ball.occupancy)
    return {false, "flat and per-ball weighting coincide on an asymmetric example"};

  // Lambda linearity on the hand example and on a larger random fixture.
  std::string err;
  if (!lambda_linearity_holds(preds, q, 4, LossWeighting::PerBall, &err))
    return {false, err};

  SplitRng rng(0xC501);
  DecodePredictions<double> rp;
  QuerySet rq;
  for (std::uint32_t i = 0; i < 30; ++i) {
    rp.pairs.push_back({i, std::uint32_t(rng.uniform_int(6))});
    rp.logits.push_back(rng.uniform(-3, 3));
    rp.intensity.push_back(rng.uniform(0, 1));
    const bool occupied = rng.uniform() < 0.4;
    const bool sight = !occupied && rng.uniform() < 0.5;
    rq.positions.push_back({0.1 * double(i), 0, 0});
    rq.occupancy.push_back(occupied ? 1 : 0);
    rq.kind.push_back(occupied ? QueryKind::Behind
                               : sight ? QueryKind::Sight : QueryKind::Front);
    rq.intensity_target.push_back(sight || rng.uniform() < 0.3 ? kNoIntensity
                                                               : rng.uniform(0, 1));
    rq.source_index.push_back(0);
  }
  rp.occupancy = sigmoid_forward(std::span<const double>(rp.logits));
  rq.validate();
  if (!lambda_linearity_holds(rp, rq, 6, LossWeighting::PerBall, &err)) return {false, err};
  if (!lambda_linearity_holds(rp, rq, 6, LossWeighting::Flat, &err)) return {false, err};

  return {true, "bce(0,t,1) = ln 2 within 1e-9 for both targets; per-ball and flat "
                "weighting reproduce the hand-worked two-support example at 1e-12; "
                "lambda linearity of loss and gradients holds at 1e-12"};
}

// ---------------------------------------------------------------------------
// C6: pretraining at the full default budget. The occupancy decision threshold
// is 0.5, frozen after the initial calibration run of this check.

Outcome check_pretraining_sanity() {
  const auto t0 = Clock::now();
  const SceneConfig scene_cfg;
  const SensorModel sensor = SensorModel::default_sensor();
  const PretrainConfig cfg;  // 256 scenes, 50 epochs, r 1, delta 0.1, lambda 1

  const PretrainResult result = pretrain(scene_cfg, sensor, cfg);
  const OccupancyEval& ev = result.metrics.occupancy;
  const double gap = ev.accuracy - ev.majority_fraction;
  const double dt = seconds_since(t0);

  const bool pass = ev.accuracy >= 0.80 && gap >= 0.20;
  return {pass, strf("held-out occupancy accuracy %.4f (bound 0.80) vs majority baseline "
                     "%.4f, gap %+.4f (bound +0.20) at frozen threshold 0.5; covered "
                     "%zu/%zu queries, final loss %.4f; %.0f s wall (informational "
                     "target: minutes on multi-core hardware)",
                     ev.accuracy, ev.majority_fraction, gap, ev.n_covered, ev.n_queries,
                     result.metrics.epochs.back().loss, dt)};
}

// ---------------------------------------------------------------------------
// Shared fixture for the 5-seed downstream checks. Scaled to finish on one
// core; the short step budget uses a faster constant rate than the full run,
// and the probe runs longer than the default protocol so the per-class IoU of
// the two minority classes resolves above seed noise. Calibrated once, then
// frozen.

PretrainConfig downstream_run_config(std::uint64_t seed) {
  PretrainConfig c;
  c.scene_count = 64;
  c.epochs = 20;
  c.eval_scene_count = 0;
  c.max_points = 1024;
  c.max_queries = 1024;
  c.optim.lr = 1e-2;
  c.seed = seed;
  return c;
}

ProbeConfig downstream_probe_config(std::uint64_t seed) {
  ProbeConfig p;
  p.epochs = 80;
  p.train_scene_count = 48;
  p.eval_scene_count = 16;
  p.seed = seed;
  return p;
}

// C7: does pretraining move the frozen-probe metric against an identically
// trained probe on a randomly initialized encoder?

Outcome check_transfer_gap() {
  const auto t0 = Clock::now();
  const SceneConfig scene_cfg;
  const SensorModel sensor = SensorModel::default_sensor();

  std::vector<double> pre_miou, rnd_miou, gaps;
  int wins = 0;
  for (int s = 0; s < 5; ++s) {
    const PretrainConfig cfg = downstream_run_config(derive_key(0xC7A0, {std::uint64_t(s)}));
    const ProbeConfig pc = downstream_probe_config(derive_key(0xC7B0, {std::uint64_t(s)}));
    const PretrainResult pre = pretrain(scene_cfg, sensor, cfg);
    ModelParams<float> random_init = pre.model.clone_shape();
    random_init.init(derive_key(0xC7C0, {std::uint64_t(s)}));

    const double a = probe(scene_cfg, sensor, cfg, pc, pre.model).miou;
    const double b = probe(scene_cfg, sensor, cfg, pc, random_init).miou;
    pre_miou.push_back(a);
    rnd_miou.push_back(b);
    gaps.push_back(a - b);
    wins += a > b;
  }

  const double mean_gap = mean_of(gaps);
  const double dt = seconds_since(t0);
  const bool pass = mean_gap > 0 && wins >= 4 && dt < 1800.0;
  return {pass, strf("frozen-probe mIoU %.4f pretrained vs %.4f random init (5-seed "
                     "means), mean gap %+.4f (needs > 0), signs %d/5 (needs >= 4); "
                     "%.0f s (bound 1800 s)",
                     mean_of(pre_miou), mean_of(rnd_miou), mean_gap, wins, dt)};
}

// ---------------------------------------------------------------------------
// C8/C9 helpers: exact row-structure audit of a sweep table.

bool table_structure_ok(const AblationTable& t, const std::string& axis,
                        const std::vector<std::string>& values, int n_seeds,
                        std::string* err) {
  if (t.axis != axis || t.n_seeds != n_seeds || t.cells.size() != values.size()) {
    *err = strf("table '%s': wrong shape (axis '%s', %d seeds, %zu cells)", axis.c_str(),
                t.axis.c_str(), t.n_seeds, t.cells.size());
    return false;
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    const AblationCell& cell = t.cells[i];
    if (cell.value != values[i]) {
      *err = strf("table '%s' cell %zu: value '%s' != '%s'", axis.c_str(), i,
                  cell.value.c_str(), values[i].c_str());
      return false;
    }
    if (cell.per_seed_miou.size() != std::size_t(n_seeds)) {
      *err = strf("table '%s' cell %s: %zu per-seed entries", axis.c_str(),
                  cell.value.c_str(), cell.per_seed_miou.size());
      return false;
    }
    double mean = 0;
    for (const double m : cell.per_seed_miou) {
      if (!(m >= 0 && m <= 1)) {
        *err = strf("table '%s' cell %s: metric %.4f outside [0,1]", axis.c_str(),
                    cell.value.c_str(), m);
        return false;
      }
      mean += m;
    }
    mean /= double(n_seeds);
    double var = 0;
    for (const double m : cell.per_seed_miou) var += (m - mean) * (m - mean);
    const double stddev = n_seeds > 1 ? std::sqrt(var / double(n_seeds - 1)) : 0.0;
    if (std::abs(cell.mean - mean) > 1e-12 || std::abs(cell.stddev - stddev) > 1e-12) {
      *err = strf("table '%s' cell %s: mean/std (%.17g, %.17g) != recomputed "
                  "(%.17g, %.17g)",
                  axis.c_str(), cell.value.c_str(), cell.mean, cell.stddev, mean, stddev);
      return false;
    }
  }
  return true;
}

// C8: the sweep emits the exact radius/delta/intensity row structures with
// 5-seed mean and std, and the intensity grid reproduces the expected ordering
// at the downstream fixture scale.

Outcome check_ablation_tables() {
  const auto t0 = Clock::now();
  const SceneConfig scene_cfg;
  const SensorModel sensor = SensorModel::default_sensor();

  // Row-structure audit runs on a deliberately tiny budget; the numbers are
  // not asserted, only the table contract.
  PretrainConfig micro;
  micro.scene_count = 4;
  micro.epochs = 2;
  micro.batch_size = 2;
  micro.eval_scene_count = 0;
  micro.max_points = 384;
  micro.max_queries = 256;
  micro.neighbor_k = 8;
  micro.optim.lr = 1e-2;
  micro.seed = 0xC8A0;
  ProbeConfig micro_probe;
  micro_probe.epochs = 6;
  micro_probe.train_scene_count = 6;
  micro_probe.eval_scene_count = 2;
  micro_probe.seed = 0xC8A1;

  const std::vector<std::string> radius_vals{"0.5", "1", "2", "4"};
  const std::vector<std::string> delta_vals{"0.05", "0.1", "0.2", "0.4", "0.8"};
  const std::vector<std::string> intensity_vals{"none", "input", "input_loss"};

  std::string err;
  const AblationTable radius_table =
      ablation_harness(scene_cfg, sensor, micro, micro_probe, "radius", radius_vals, 5);
  if (!table_structure_ok(radius_table, "radius", radius_vals, 5, &err)) return {false, err};
  const AblationTable delta_table =
      ablation_harness(scene_cfg, sensor, micro, micro_probe, "delta", delta_vals, 5);
  if (!table_structure_ok(delta_table, "delta", delta_vals, 5, &err)) return {false, err};
  const AblationTable intensity_micro = ablation_harness(scene_cfg, sensor, micro,
                                                         micro_probe, "intensity",
                                                         intensity_vals, 5);
  if (!table_structure_ok(intensity_micro, "intensity", intensity_vals, 5, &err))
    return {false, err};

  // Ordering claim at the downstream fixture scale.
  const PretrainConfig base = downstream_run_config(0xC8B0);
  const ProbeConfig pc = downstream_probe_config(0xC8B1);
  const AblationTable t =
      ablation_harness(scene_cfg, sensor, base, pc, "intensity", intensity_vals, 5);
  if (!table_structure_ok(t, "intensity", intensity_vals, 5, &err)) return {false, err};
  const double none = t.cells[0].mean, input = t.cells[1].mean, both = t.cells[2].mean;

  const double dt = seconds_since(t0);
  const bool pass = both >= input && input >= none;
  return {pass, strf("row structures exact for radius {0.5,1,2,4}, delta "
                     "{0.05,0.1,0.2,0.4,0.8} and the intensity grid (5-seed mean/std "
                     "recomputed at 1e-12); intensity ordering input+loss %.4f >= input "
                     "%.4f >= none %.4f in 5-seed means; %.0f s",
                     both, input, none, dt)};
}

// C9: per-point ball decoding should not trail the pooled heads downstream.

Outcome check_head_ordering() {
  const auto t0 = Clock::now();
  const SceneConfig scene_cfg;
  const SensorModel sensor = SensorModel::default_sensor();
  const std::vector<std::string> heads{"per_point_ball", "ball_avg", "ball_max"};

  const PretrainConfig base = downstream_run_config(0xC9A0);
  const ProbeConfig pc = downstream_probe_config(0xC9A1);
  const AblationTable t = ablation_harness(scene_cfg, sensor, base, pc, "head", heads, 5);
  std::string err;
  if (!table_structure_ok(t, "head", heads, 5, &err)) return {false, err};

  const double ppb = t.cells[0].mean, avg = t.cells[1].mean, max = t.cells[2].mean;
  const double dt = seconds_since(t0);
  const bool pass = ppb >= avg && ppb >= max;
  return {pass, strf("5-seed mean probe mIoU: per_point_ball %.4f vs ball_avg %.4f and "
                     "ball_max %.4f (per-point ball must not trail); %.0f s",
                     ppb, avg, max, dt)};
}

// ---------------------------------------------------------------------------
// C10: the installed CLI is deterministic across reruns and thread counts, and
// a file-driven run reproduces the in-process run byte for byte.

std::optional<std::string> slurp_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

Outcome check_cli_pipeline(const std::string& cli) {
  if (cli.empty())
    return {false, "pass the CLI binary path as the second argument"};

  const auto t0 = Clock::now();
  const fs::path work = fs::temp_directory_path() / "visocc_acceptance_cli";
  std::error_code ec;
  fs::remove_all(work, ec);
  fs::create_directories(work);
  const fs::path log = work / "cli.log";

  const std::string common =
      " --set pretrain.scene_count=4 --set pretrain.epochs=2 --set pretrain.batch_size=2"
      " --set pretrain.eval_scene_count=2 --set pretrain.max_points=256"
      " --set pretrain.max_queries=128 --set pretrain.neighbor_k=8"
      " --set simulate.scene_count=4";
  const auto run = [&](const std::string& tail) {
    const std::string cmd = "\"" + cli + "\"" + common + " " + tail + " >> \"" +
                            log.string() + "\" 2>&1";
    return std::system(cmd.c_str()) == 0;
  };
  const auto out_flag = [&](const char* name) {
    return " --out \"" + (work / name).string() + "\" ";
  };

  if (!run("--threads 1" + out_flag("run_a") + "pretrain") ||
      !run("--threads 1" + out_flag("run_b") + "pretrain") ||
      !run("--threads 3" + out_flag("run_c") + "pretrain"))
    return {false, "a pretrain invocation failed; see " + log.string()};

  for (const char* file : {"model.ckpt", "metrics.csv"}) {
    const auto a = slurp_file(work / "run_a" / file);
    const auto b = slurp_file(work / "run_b" / file);
    const auto c = slurp_file(work / "run_c" / file);
    if (!a || !b || !c) return {false, strf("missing %s in a rerun output", file)};
    if (*a != *b) return {false, strf("%s differs between identical reruns", file)};
    if (*a != *c) return {false, strf("%s differs between 1 and 3 threads", file)};
  }

  if (!run(out_flag("scans") + "simulate"))
    return {false, "simulate failed; see " + log.string()};
  if (!run("--scans \"" + (work / "scans").string() + "\"" + out_flag("qsets") +
           "make-queries"))
    return {false, "make-queries failed; see " + log.string()};
  if (!run("--set pretrain.static_data=true --scans \"" + (work / "scans").string() +
           "\" --queries \"" + (work / "qsets").string() + "\"" + out_flag("run_files") +
           "pretrain"))
    return {false, "file-driven pretrain failed; see " + log.string()};
  if (!run("--set pretrain.static_data=true" + out_flag("run_mem") + "pretrain"))
    return {false, "in-process static pretrain failed; see " + log.string()};

  for (const char* file : {"model.ckpt", "metrics.csv"}) {
    const auto a = slurp_file(work / "run_files" / file);
    const auto b = slurp_file(work / "run_mem" / file);
    if (!a || !b) return {false, strf("missing %s in a pipeline output", file)};
    if (*a != *b)
      return {false, strf("%s: file-driven run differs from the in-process run", file)};
  }

  fs::remove_all(work, ec);
  const double dt = seconds_since(t0);
  return {true, strf("checkpoints and metrics byte-identical across reruns and thread "
                     "counts 1/3; simulate -> make-queries -> pretrain reproduces the "
                     "in-process run byte for byte; %.0f s",
                     dt)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string which = argc > 1 ? argv[1] : "all";
  const std::string cli = argc > 2 ? argv[2] : "";

  struct Entry {
    const char* id;
    std::function<Outcome()> run;
  };
  const std::vector<Entry> entries{
      {"C1", check_query_oracle},
      {"C2", check_label_soundness},
      {"C3", check_index_exactness},
      {"C4", check_gradient_suite},
      {"C5", check_loss_values},
      {"C6", check_pretraining_sanity},
      {"C7", check_transfer_gap},
      {"C8", check_ablation_tables},
      {"C9", check_head_ordering},
      {"C10", [&cli] { return check_cli_pipeline(cli); }},
  };

  bool matched = false, all_pass = true;
  for (const Entry& e : entries) {
    if (which != "all" && which != e.id) continue;
    matched = true;
    Outcome o;
    try {
      o = e.run();
    } catch (const std::exception& ex) {
      o = {false, std::string("unhandled exception: ") + ex.what()};
    }
    std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", e.id, o.detail.c_str());
    std::fflush(stdout);
    all_pass = all_pass && o.pass;
  }

  if (!matched) {
    std::fprintf(stderr, "unknown selector '%s' (use C1..C10 or all)\n", which.c_str());
    return 2;
  }
  return all_pass ? 0 : 1;
}
