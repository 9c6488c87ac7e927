#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "visocc/geometry.hpp"
#include "visocc/nn.hpp"
#include "visocc/query_gen.hpp"

namespace visocc {

inline constexpr int kLatentDim = 128;
inline constexpr int kNeighborFeatureDim = 4;  // dx, dy, dz, intensity

// Local point encoder: a shared MLP over each point's k nearest neighbors
// (relative position + intensity), max-pooled, then refined per point.
template <typename T>
struct EncoderParams {
  int neighbor_k = 16;
  Linear<T> nbr1{kNeighborFeatureDim, 64}, nbr2{64, 64}, nbr3{64, kLatentDim};
  Linear<T> post1{kLatentDim, kLatentDim}, post2{kLatentDim, kLatentDim};
};

// Occupancy/intensity decoder: latent + relative query position -> 2 channels
// (occupancy logit, intensity).
template <typename T>
struct DecoderParams {
  Linear<T> fc1{kLatentDim + 3, 128}, fc2{128, 128}, fc3{128, 128}, fc4{128, 2};
};

template <typename T>
struct ModelParams {
  EncoderParams<T> encoder;
  DecoderParams<T> decoder;

  // Weights keyed by (seed, layer position) so any one layer can be
  // reproduced independently of the others.
  void init(std::uint64_t seed);
  void zero_grad();
  ModelParams clone_shape() const;  // same shapes, zero values

  // Stable enumeration used by the optimizer and the checkpoint format.
  void for_each_layer(const std::function<void(const std::string&, Linear<T>&)>& fn);
  std::vector<ParamView<T>> param_views();
};

enum class SupportMode : std::uint8_t { PointSupports = 0, BevGrid = 1 };

template <typename T>
struct LatentField {
  SupportMode mode = SupportMode::PointSupports;
  std::vector<Vec3> support_positions;
  Tensor2<T> latents;  // |S| x kLatentDim
  double bev_pitch = 0;
};

// Saved forward state for the backward pass.
template <typename T>
struct EncodeTrace {
  int n = 0, k = 0;
  std::vector<std::uint32_t> knn;  // n*k neighbor ids
  Tensor2<T> feats, h1, h2, h3;    // per-neighbor rows
  Tensor2<int> pool_argmax;
  Tensor2<T> pooled, g1;
};

template <typename T>
struct BevTrace {
  EncodeTrace<T> point_trace;
  std::vector<std::uint32_t> perm;  // row order grouping points by cell
  std::vector<int> offsets;         // one segment per occupied cell
  Tensor2<int> cell_argmax;
};

// Per-point latents. Intensity enters as the fourth neighbor feature (zero
// when the cloud has none or when use_intensity is off).
template <typename T>
LatentField<T> encode(const PointCloud& cloud, const EncoderParams<T>& params,
                      bool use_intensity = true, EncodeTrace<T>* trace = nullptr);

template <typename T>
void encode_backward(const EncodeTrace<T>& trace, EncoderParams<T>& params,
                     const Tensor2<T>& dlatent);

// Pools point latents into occupied BEV cells. Supports sit at cell centers
// with z = 0; pairing downstream uses the cylindrical metric so queries keep
// their height in the relative coordinate.
template <typename T>
LatentField<T> encode_bev(const PointCloud& cloud, const EncoderParams<T>& params,
                          double pitch, bool use_intensity = true,
                          BevTrace<T>* trace = nullptr);

template <typename T>
void encode_bev_backward(const BevTrace<T>& trace, EncoderParams<T>& params,
                         const Tensor2<T>& dcell_latent);

enum class DecodeHead : std::uint8_t { PerPointBall = 0, BallAvg = 1, BallMax = 2 };

template <typename T>
struct DecodePredictions {
  // Origin of each prediction row: (query, support). PerPointBall emits one
  // row per in-range pair; pooled heads emit one row per covered query, with
  // the nearest in-range support recorded.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  std::vector<T> logits;     // occupancy channel, pre-sigmoid
  std::vector<T> intensity;  // raw intensity channel
  std::vector<T> occupancy;  // sigmoid(logits)
};

template <typename T>
struct DecodeTrace {
  DecodeHead head = DecodeHead::PerPointBall;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> ball_pairs;  // all in-range pairs
  std::vector<int> offsets;  // pooled heads: pair rows per covered query
  Tensor2<int> pool_argmax;  // BallMax
  Tensor2<T> gathered;       // pooled heads: latent rows in pair order
  Tensor2<T> input, a1, a2, a3;
  int n_supports = 0;
};

// Predicts occupancy and intensity at query positions against the latent
// field, pairing queries with supports within radius r (ball metric for point
// supports, cylinder for BEV).
template <typename T>
DecodePredictions<T> decode(const LatentField<T>& field, const QuerySet& queries,
                            double r, DecodeHead head, const DecoderParams<T>& params,
                            DecodeTrace<T>* trace = nullptr);

// Returns d(loss)/d(latents) for the encoder backward pass.
template <typename T>
Tensor2<T> decode_backward(const DecodeTrace<T>& trace, DecoderParams<T>& params,
                           std::span<const T> dlogits, std::span<const T> dintensity);

enum class IntensityMetric : std::uint8_t { L1 = 0, L2 = 1 };
enum class LossWeighting : std::uint8_t { PerBall = 0, Flat = 1 };

template <typename T>
struct PretextLossResult {
  double total = 0, occupancy = 0, intensity = 0;
  std::vector<T> dlogits, dintensity;
  std::size_t rows = 0;                // prediction rows entering the loss
  std::size_t supports_used = 0;       // supports with at least one query
  std::size_t intensity_rows = 0;      // rows with an intensity target
  std::size_t supports_with_intensity = 0;
};

// Occupancy term: binary cross-entropy over prediction rows. PerBall averages
// within each support's query set first, then across supports (supports with
// no queries simply never appear); Flat averages over all rows at once. The
// intensity term has the same structure over rows that carry a target
// (front/behind with a measured intensity) and is scaled by lambda.
template <typename T>
PretextLossResult<T> pretext_loss(const DecodePredictions<T>& preds,
                                  const QuerySet& queries, std::size_t n_supports,
                                  double lambda, IntensityMetric metric,
                                  LossWeighting weighting);

}  // namespace visocc
