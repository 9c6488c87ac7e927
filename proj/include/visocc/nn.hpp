#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "visocc/rng.hpp"
#include "visocc/tensor.hpp"

namespace visocc {

// Fully connected layer, weight stored (out x in). Gradients accumulate into
// the *_grad buffers until zero_grad().
template <typename T>
struct Linear {
  Tensor2<T> weight, weight_grad;
  std::vector<T> bias, bias_grad;

  Linear() = default;
  Linear(int in, int out)
      : weight(out, in), weight_grad(out, in), bias(std::size_t(out), T(0)),
        bias_grad(std::size_t(out), T(0)) {}

  int in_features() const { return weight.cols; }
  int out_features() const { return weight.rows; }

  // Kaiming-uniform over the fan-in: U(-sqrt(6/in), sqrt(6/in)); zero bias.
  void init_kaiming(SplitRng& rng);
  void zero_grad();
};

// y = x * W^T + b. Output checked finite.
template <typename T>
Tensor2<T> linear_forward(const Linear<T>& layer, const Tensor2<T>& x);

// Accumulates dW += dy^T x and db += colsum(dy); returns dx = dy * W when
// want_dx (the first layer of a network can skip it).
template <typename T>
Tensor2<T> linear_backward(Linear<T>& layer, const Tensor2<T>& x, const Tensor2<T>& dy,
                           bool want_dx = true);

template <typename T>
Tensor2<T> relu_forward(const Tensor2<T>& x);

// y is the forward output; the mask y > 0 equals x > 0 there.
template <typename T>
Tensor2<T> relu_backward(const Tensor2<T>& y, const Tensor2<T>& dy);

template <typename T>
std::vector<T> sigmoid_forward(std::span<const T> x);

// Segmented pooling over rows. offsets has one entry per segment plus a
// terminator; segment g owns rows [offsets[g], offsets[g+1]). Empty segments
// are rejected. argmax records the winning row per (segment, col), first row
// on ties.
template <typename T>
Tensor2<T> maxpool_rows(const Tensor2<T>& x, std::span<const int> offsets,
                        Tensor2<int>* argmax);

template <typename T>
Tensor2<T> maxpool_rows_backward(const Tensor2<int>& argmax, int in_rows,
                                 const Tensor2<T>& dy);

template <typename T>
Tensor2<T> avgpool_rows(const Tensor2<T>& x, std::span<const int> offsets);

template <typename T>
Tensor2<T> avgpool_rows_backward(std::span<const int> offsets, int in_rows,
                                 const Tensor2<T>& dy);

// Numerically stable weighted binary cross-entropy on logits.
// loss = sum_i w_i * [max(x,0) - x*t + log(1+exp(-|x|))], grad_i = w_i*(sigmoid(x_i)-t_i).
// Weights are caller-normalized (they encode the loss's own averaging).
template <typename T>
struct ScalarLossResult {
  double value = 0;
  std::vector<T> grad;
};

template <typename T>
ScalarLossResult<T> bce_with_logits(std::span<const T> logits,
                                    std::span<const std::uint8_t> targets,
                                    std::span<const double> weights);

// Masked regression losses. With empty weights every masked element gets
// 1/count; an all-false mask yields loss 0 with zero gradient.
template <typename T>
ScalarLossResult<T> l1_loss(std::span<const T> pred, std::span<const T> target,
                            std::span<const std::uint8_t> mask,
                            std::span<const double> weights = {});

template <typename T>
ScalarLossResult<T> l2_loss(std::span<const T> pred, std::span<const T> target,
                            std::span<const std::uint8_t> mask,
                            std::span<const double> weights = {});

// Softmax cross-entropy over rows, mean-reduced; used by the probes.
template <typename T>
struct CeResult {
  double value = 0;
  Tensor2<T> dlogits;
};

template <typename T>
CeResult<T> softmax_cross_entropy(const Tensor2<T>& logits,
                                  std::span<const std::uint32_t> labels);

// One optimizable tensor, flattened.
template <typename T>
struct ParamView {
  T* value = nullptr;
  T* grad = nullptr;
  std::size_t size = 0;
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay Adam. Moments are kept per parameter tensor in the
// order of the first step() call; that order must stay stable over training.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  void step(std::span<const ParamView<T>> params);

  const AdamWConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  std::int64_t step_count() const { return step_; }
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  void restore(std::int64_t step, std::vector<std::vector<T>> m,
               std::vector<std::vector<T>> v);

 private:
  AdamWConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

// Cosine annealing from base at epoch 0 to 0 at the last epoch.
double cosine_lr(int epoch, int total_epochs, double base_lr);

}  // namespace visocc
