#include "visocc/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "visocc/spatial_index.hpp"

namespace visocc {

template <typename T>
void ModelParams<T>::init(std::uint64_t seed) {
  std::uint64_t layer = 0;
  for_each_layer([&](const std::string&, Linear<T>& l) {
    SplitRng rng(seed, /*stream=*/derive_key(0x494e4954ull, {layer++}));  // "INIT"
    l.init_kaiming(rng);
  });
}

template <typename T>
void ModelParams<T>::zero_grad() {
  for_each_layer([](const std::string&, Linear<T>& l) { l.zero_grad(); });
}

template <typename T>
ModelParams<T> ModelParams<T>::clone_shape() const {
  ModelParams<T> m;
  m.encoder.neighbor_k = encoder.neighbor_k;
  return m;
}

template <typename T>
void ModelParams<T>::for_each_layer(
    const std::function<void(const std::string&, Linear<T>&)>& fn) {
  fn("encoder.nbr1", encoder.nbr1);
  fn("encoder.nbr2", encoder.nbr2);
  fn("encoder.nbr3", encoder.nbr3);
  fn("encoder.post1", encoder.post1);
  fn("encoder.post2", encoder.post2);
  fn("decoder.fc1", decoder.fc1);
  fn("decoder.fc2", decoder.fc2);
  fn("decoder.fc3", decoder.fc3);
  fn("decoder.fc4", decoder.fc4);
}

template <typename T>
std::vector<ParamView<T>> ModelParams<T>::param_views() {
  std::vector<ParamView<T>> views;
  for_each_layer([&](const std::string&, Linear<T>& l) {
    views.push_back({l.weight.data.data(), l.weight_grad.data.data(), l.weight.data.size()});
    views.push_back({l.bias.data(), l.bias_grad.data(), l.bias.size()});
  });
  return views;
}

template <typename T>
LatentField<T> encode(const PointCloud& cloud, const EncoderParams<T>& params,
                      bool use_intensity, EncodeTrace<T>* trace) {
  const int n = int(cloud.size());
  const int k = params.neighbor_k;
  if (n < k) throw std::invalid_argument("encode: fewer points than neighbor_k");

  EncodeTrace<T> local;
  EncodeTrace<T>& tr = trace ? *trace : local;
  tr.n = n;
  tr.k = k;
  tr.knn = knn_indices(cloud.points, k);

  tr.feats = Tensor2<T>(n * k, kNeighborFeatureDim);
  const bool with_intensity = use_intensity && cloud.has_intensity();
  for (int i = 0; i < n; ++i) {
    const Vec3 p = cloud.points[std::size_t(i)];
    for (int j = 0; j < k; ++j) {
      const std::uint32_t nb = tr.knn[std::size_t(i) * k + std::size_t(j)];
      const Vec3 d = cloud.points[nb] - p;
      T* row = tr.feats.row(i * k + j);
      row[0] = T(d.x);
      row[1] = T(d.y);
      row[2] = T(d.z);
      row[3] = with_intensity ? T(cloud.intensities[nb]) : T(0);
    }
  }

  tr.h1 = relu_forward(linear_forward(params.nbr1, tr.feats));
  tr.h2 = relu_forward(linear_forward(params.nbr2, tr.h1));
  tr.h3 = linear_forward(params.nbr3, tr.h2);

  std::vector<int> offsets(std::size_t(n) + 1);
  for (int i = 0; i <= n; ++i) offsets[std::size_t(i)] = i * k;
  tr.pooled = maxpool_rows(tr.h3, offsets, &tr.pool_argmax);

  tr.g1 = relu_forward(linear_forward(params.post1, tr.pooled));

  LatentField<T> field;
  field.mode = SupportMode::PointSupports;
  field.support_positions = cloud.points;
  field.latents = linear_forward(params.post2, tr.g1);
  return field;
}

template <typename T>
void encode_backward(const EncodeTrace<T>& trace, EncoderParams<T>& params,
                     const Tensor2<T>& dlatent) {
  if (dlatent.rows != trace.n || dlatent.cols != kLatentDim)
    throw std::invalid_argument("encode_backward: gradient shape mismatch");
  Tensor2<T> d = linear_backward(params.post2, trace.g1, dlatent);
  d = relu_backward(trace.g1, d);
  d = linear_backward(params.post1, trace.pooled, d);
  d = maxpool_rows_backward(trace.pool_argmax, trace.n * trace.k, d);
  d = linear_backward(params.nbr3, trace.h2, d);
  d = relu_backward(trace.h2, d);
  d = linear_backward(params.nbr2, trace.h1, d);
  d = relu_backward(trace.h1, d);
  linear_backward(params.nbr1, trace.feats, d, /*want_dx=*/false);
}

template <typename T>
LatentField<T> encode_bev(const PointCloud& cloud, const EncoderParams<T>& params,
                          double pitch, bool use_intensity, BevTrace<T>* trace) {
  if (!(pitch > 0)) throw std::invalid_argument("encode_bev: pitch must be positive");

  BevTrace<T> local;
  BevTrace<T>& tr = trace ? *trace : local;
  LatentField<T> points_field = encode(cloud, params, use_intensity, &tr.point_trace);

  // Group points by BEV cell; cells ordered by (ix, iy), points by index.
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::uint32_t>> cells;
  for (std::uint32_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    cells[{std::int64_t(std::floor(p.x / pitch)), std::int64_t(std::floor(p.y / pitch))}]
        .push_back(i);
  }

  tr.perm.clear();
  tr.offsets.assign(1, 0);
  LatentField<T> field;
  field.mode = SupportMode::BevGrid;
  field.bev_pitch = pitch;
  field.support_positions.reserve(cells.size());
  for (const auto& [cell, ids] : cells) {
    for (std::uint32_t i : ids) tr.perm.push_back(i);
    tr.offsets.push_back(int(tr.perm.size()));
    field.support_positions.push_back({(double(cell.first) + 0.5) * pitch,
                                       (double(cell.second) + 0.5) * pitch, 0.0});
  }

  Tensor2<T> gathered(int(tr.perm.size()), kLatentDim);
  for (std::size_t r = 0; r < tr.perm.size(); ++r)
    std::copy_n(points_field.latents.row(int(tr.perm[r])), kLatentDim,
                gathered.row(int(r)));
  field.latents = maxpool_rows(gathered, tr.offsets, &tr.cell_argmax);
  return field;
}

template <typename T>
void encode_bev_backward(const BevTrace<T>& trace, EncoderParams<T>& params,
                         const Tensor2<T>& dcell_latent) {
  const int n_rows = int(trace.perm.size());
  Tensor2<T> dgathered = maxpool_rows_backward(trace.cell_argmax, n_rows, dcell_latent);
  Tensor2<T> dpoint(trace.point_trace.n, kLatentDim);
  for (int r = 0; r < n_rows; ++r) {
    const T* src = dgathered.row(r);
    T* dst = dpoint.row(int(trace.perm[std::size_t(r)]));
    for (int c = 0; c < kLatentDim; ++c) dst[c] += src[c];
  }
  encode_backward(trace.point_trace, params, dpoint);
}

namespace {

template <typename T>
void run_decoder_mlp(const DecoderParams<T>& params, DecodeTrace<T>& tr,
                     DecodePredictions<T>& out) {
  tr.a1 = relu_forward(linear_forward(params.fc1, tr.input));
  tr.a2 = relu_forward(linear_forward(params.fc2, tr.a1));
  tr.a3 = relu_forward(linear_forward(params.fc3, tr.a2));
  const Tensor2<T> y = linear_forward(params.fc4, tr.a3);

  const int rows = y.rows;
  out.logits.resize(std::size_t(rows));
  out.intensity.resize(std::size_t(rows));
  for (int i = 0; i < rows; ++i) {
    out.logits[std::size_t(i)] = y(i, 0);
    out.intensity[std::size_t(i)] = y(i, 1);
  }
  out.occupancy = sigmoid_forward(std::span<const T>(out.logits));
}

}  // namespace

template <typename T>
DecodePredictions<T> decode(const LatentField<T>& field, const QuerySet& queries,
                            double r, DecodeHead head, const DecoderParams<T>& params,
                            DecodeTrace<T>* trace) {
  if (field.support_positions.empty())
    throw std::invalid_argument("decode: latent field has no supports");
  if (queries.size() == 0) throw std::invalid_argument("decode: no queries");

  const IndexMetric metric = field.mode == SupportMode::BevGrid
                                 ? IndexMetric::CylinderBev
                                 : IndexMetric::Ball3d;
  SpatialIndex index(field.support_positions, r, metric);

  DecodeTrace<T> local;
  DecodeTrace<T>& tr = trace ? *trace : local;
  tr.head = head;
  tr.n_supports = int(field.support_positions.size());
  tr.ball_pairs = index.radius_pairs(queries.positions, r);

  DecodePredictions<T> out;
  if (tr.ball_pairs.empty()) return out;  // nothing in range anywhere

  if (head == DecodeHead::PerPointBall) {
    out.pairs = tr.ball_pairs;
    tr.input = Tensor2<T>(int(tr.ball_pairs.size()), kLatentDim + 3);
    for (std::size_t i = 0; i < tr.ball_pairs.size(); ++i) {
      const auto [qi, si] = tr.ball_pairs[i];
      T* row = tr.input.row(int(i));
      std::copy_n(field.latents.row(int(si)), kLatentDim, row);
      const Vec3 rel = queries.positions[qi] - field.support_positions[si];
      row[kLatentDim + 0] = T(rel.x);
      row[kLatentDim + 1] = T(rel.y);
      row[kLatentDim + 2] = T(rel.z);
    }
    run_decoder_mlp(params, tr, out);
    return out;
  }

  // Pooled heads: one row per query that has at least one in-range support.
  tr.offsets.assign(1, 0);
  std::vector<std::uint32_t> covered;
  for (std::size_t i = 0; i < tr.ball_pairs.size();) {
    const std::uint32_t qi = tr.ball_pairs[i].first;
    std::size_t j = i;
    while (j < tr.ball_pairs.size() && tr.ball_pairs[j].first == qi) ++j;
    covered.push_back(qi);
    tr.offsets.push_back(int(j));
    i = j;
  }

  tr.gathered = Tensor2<T>(int(tr.ball_pairs.size()), kLatentDim);
  for (std::size_t i = 0; i < tr.ball_pairs.size(); ++i)
    std::copy_n(field.latents.row(int(tr.ball_pairs[i].second)), kLatentDim,
                tr.gathered.row(int(i)));

  Tensor2<T> pooled = head == DecodeHead::BallMax
                          ? maxpool_rows(tr.gathered, tr.offsets, &tr.pool_argmax)
                          : avgpool_rows(tr.gathered, tr.offsets);

  tr.input = Tensor2<T>(int(covered.size()), kLatentDim + 3);
  out.pairs.reserve(covered.size());
  for (std::size_t g = 0; g < covered.size(); ++g) {
    const std::uint32_t qi = covered[g];
    // Nearest in-range support (tie -> lower index; pairs are index-sorted).
    std::uint32_t best = tr.ball_pairs[std::size_t(tr.offsets[g])].second;
    double best_d = SpatialIndex::distance2(queries.positions[qi],
                                            field.support_positions[best], metric);
    for (int i = tr.offsets[g] + 1; i < tr.offsets[g + 1]; ++i) {
      const std::uint32_t si = tr.ball_pairs[std::size_t(i)].second;
      const double d = SpatialIndex::distance2(queries.positions[qi],
                                               field.support_positions[si], metric);
      if (d < best_d) {
        best_d = d;
        best = si;
      }
    }
    out.pairs.emplace_back(qi, best);
    T* row = tr.input.row(int(g));
    std::copy_n(pooled.row(int(g)), kLatentDim, row);
    const Vec3 rel = queries.positions[qi] - field.support_positions[best];
    row[kLatentDim + 0] = T(rel.x);
    row[kLatentDim + 1] = T(rel.y);
    row[kLatentDim + 2] = T(rel.z);
  }
  run_decoder_mlp(params, tr, out);
  return out;
}

template <typename T>
Tensor2<T> decode_backward(const DecodeTrace<T>& trace, DecoderParams<T>& params,
                           std::span<const T> dlogits, std::span<const T> dintensity) {
  const int rows = trace.input.rows;
  if (int(dlogits.size()) != rows || int(dintensity.size()) != rows)
    throw std::invalid_argument("decode_backward: gradient length mismatch");

  Tensor2<T> dy(rows, 2);
  for (int i = 0; i < rows; ++i) {
    dy(i, 0) = dlogits[std::size_t(i)];
    dy(i, 1) = dintensity[std::size_t(i)];
  }
  Tensor2<T> d = linear_backward(params.fc4, trace.a3, dy);
  d = relu_backward(trace.a3, d);
  d = linear_backward(params.fc3, trace.a2, d);
  d = relu_backward(trace.a2, d);
  d = linear_backward(params.fc2, trace.a1, d);
  d = relu_backward(trace.a1, d);
  d = linear_backward(params.fc1, trace.input, d);

  Tensor2<T> dlatent(trace.n_supports, kLatentDim);
  if (trace.head == DecodeHead::PerPointBall) {
    for (std::size_t i = 0; i < trace.ball_pairs.size(); ++i) {
      const T* src = d.row(int(i));
      T* dst = dlatent.row(int(trace.ball_pairs[i].second));
      for (int c = 0; c < kLatentDim; ++c) dst[c] += src[c];
    }
    return dlatent;
  }

  // Pooled heads: strip the relative-coordinate columns, then route the
  // pooled gradient back to the gathered pair rows.
  Tensor2<T> dpooled(d.rows, kLatentDim);
  for (int i = 0; i < d.rows; ++i)
    std::copy_n(d.row(i), kLatentDim, dpooled.row(i));
  const Tensor2<T> dgathered =
      trace.head == DecodeHead::BallMax
          ? maxpool_rows_backward(trace.pool_argmax, int(trace.ball_pairs.size()), dpooled)
          : avgpool_rows_backward(trace.offsets, int(trace.ball_pairs.size()), dpooled);
  for (std::size_t i = 0; i < trace.ball_pairs.size(); ++i) {
    const T* src = dgathered.row(int(i));
    T* dst = dlatent.row(int(trace.ball_pairs[i].second));
    for (int c = 0; c < kLatentDim; ++c) dst[c] += src[c];
  }
  return dlatent;
}

template <typename T>
PretextLossResult<T> pretext_loss(const DecodePredictions<T>& preds,
                                  const QuerySet& queries, std::size_t n_supports,
                                  double lambda, IntensityMetric metric,
                                  LossWeighting weighting) {
  const std::size_t rows = preds.pairs.size();
  if (rows == 0)
    throw std::invalid_argument("pretext_loss: no prediction has a support in range");
  if (preds.logits.size() != rows || preds.intensity.size() != rows)
    throw std::invalid_argument("pretext_loss: prediction array mismatch");

  PretextLossResult<T> result;
  result.rows = rows;

  std::vector<std::uint8_t> targets(rows);
  std::vector<std::uint8_t> intensity_mask(rows);
  std::vector<T> intensity_target(rows, T(0));
  for (std::size_t i = 0; i < rows; ++i) {
    const auto [qi, si] = preds.pairs[i];
    if (qi >= queries.size() || si >= n_supports)
      throw std::invalid_argument("pretext_loss: pair index out of range");
    targets[i] = queries.occupancy[qi];
    const double it = queries.intensity_target[qi];
    const bool supervised = (queries.kind[qi] == QueryKind::Front ||
                             queries.kind[qi] == QueryKind::Behind) &&
                            it != kNoIntensity;
    intensity_mask[i] = supervised ? 1 : 0;
    if (supervised) intensity_target[i] = T(it);
  }

  // Per-support row counts drive the two-level average.
  std::vector<std::uint32_t> occ_count(n_supports, 0), int_count(n_supports, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    ++occ_count[preds.pairs[i].second];
    if (intensity_mask[i]) ++int_count[preds.pairs[i].second];
  }
  for (std::uint32_t c : occ_count) result.supports_used += c > 0 ? 1 : 0;
  for (std::uint32_t c : int_count) result.supports_with_intensity += c > 0 ? 1 : 0;
  for (std::uint8_t m : intensity_mask) result.intensity_rows += m;

  std::vector<double> occ_w(rows), int_w(rows, 0.0);
  if (weighting == LossWeighting::PerBall) {
    for (std::size_t i = 0; i < rows; ++i) {
      const std::uint32_t s = preds.pairs[i].second;
      occ_w[i] = 1.0 / (double(result.supports_used) * double(occ_count[s]));
      if (intensity_mask[i])
        int_w[i] = 1.0 / (double(result.supports_with_intensity) * double(int_count[s]));
    }
  } else {
    for (std::size_t i = 0; i < rows; ++i) {
      occ_w[i] = 1.0 / double(rows);
      if (intensity_mask[i]) int_w[i] = 1.0 / double(result.intensity_rows);
    }
  }

  const auto occ = bce_with_logits<T>(preds.logits, targets, occ_w);
  result.occupancy = occ.value;
  result.dlogits = occ.grad;

  ScalarLossResult<T> inten =
      metric == IntensityMetric::L1
          ? l1_loss<T>(preds.intensity, intensity_target, intensity_mask, int_w)
          : l2_loss<T>(preds.intensity, intensity_target, intensity_mask, int_w);
  result.intensity = inten.value;
  result.dintensity.resize(rows);
  for (std::size_t i = 0; i < rows; ++i)
    result.dintensity[i] = T(lambda * double(inten.grad[i]));

  result.total = result.occupancy + lambda * result.intensity;
  return result;
}

#define VISOCC_INSTANTIATE_MODEL(T)                                                     \
  template struct ModelParams<T>;                                                       \
  template LatentField<T> encode<T>(const PointCloud&, const EncoderParams<T>&, bool,   \
                                    EncodeTrace<T>*);                                   \
  template void encode_backward<T>(const EncodeTrace<T>&, EncoderParams<T>&,            \
                                   const Tensor2<T>&);                                  \
  template LatentField<T> encode_bev<T>(const PointCloud&, const EncoderParams<T>&,     \
                                        double, bool, BevTrace<T>*);                    \
  template void encode_bev_backward<T>(const BevTrace<T>&, EncoderParams<T>&,           \
                                       const Tensor2<T>&);                              \
  template DecodePredictions<T> decode<T>(const LatentField<T>&, const QuerySet&,       \
                                          double, DecodeHead, const DecoderParams<T>&,  \
                                          DecodeTrace<T>*);                             \
  template Tensor2<T> decode_backward<T>(const DecodeTrace<T>&, DecoderParams<T>&,      \
                                         std::span<const T>, std::span<const T>);       \
  template PretextLossResult<T> pretext_loss<T>(const DecodePredictions<T>&,            \
                                                const QuerySet&, std::size_t, double,   \
                                                IntensityMetric, LossWeighting);

VISOCC_INSTANTIATE_MODEL(float)
VISOCC_INSTANTIATE_MODEL(double)
#undef VISOCC_INSTANTIATE_MODEL

}  // namespace visocc
