#include "visocc/nn.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace visocc {

namespace {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<EMat<T>>;
template <typename T>
using CMap = Eigen::Map<const EMat<T>>;

template <typename T>
CMap<T> cmap(const Tensor2<T>& t) {
  return CMap<T>(t.data.data(), t.rows, t.cols);
}
template <typename T>
Map<T> map(Tensor2<T>& t) {
  return Map<T>(t.data.data(), t.rows, t.cols);
}

void check_offsets(std::span<const int> offsets, int rows) {
  if (offsets.size() < 2) throw std::invalid_argument("pool: need at least one segment");
  if (offsets.front() != 0 || offsets.back() != rows)
    throw std::invalid_argument("pool: offsets must cover all rows");
  for (std::size_t g = 0; g + 1 < offsets.size(); ++g)
    if (offsets[g + 1] <= offsets[g])
      throw std::invalid_argument("pool: empty segment");
}

}  // namespace

template <typename T>
void check_finite(std::span<const T> values, const char* what) {
  double acc = 0;
  for (T v : values) acc += double(v);
  if (!std::isfinite(acc)) {
    for (T v : values)
      if (!std::isfinite(double(v)))
        throw std::runtime_error(std::string(what) + ": non-finite value");
    throw std::runtime_error(std::string(what) + ": non-finite accumulation");
  }
}

template <typename T>
void Linear<T>::init_kaiming(SplitRng& rng) {
  const double bound = std::sqrt(6.0 / double(in_features()));
  for (T& w : weight.data) w = T(rng.uniform(-bound, bound));
  std::fill(bias.begin(), bias.end(), T(0));
  zero_grad();
}

template <typename T>
void Linear<T>::zero_grad() {
  weight_grad.fill(T(0));
  std::fill(bias_grad.begin(), bias_grad.end(), T(0));
}

template <typename T>
Tensor2<T> linear_forward(const Linear<T>& layer, const Tensor2<T>& x) {
  if (x.cols != layer.in_features())
    throw std::invalid_argument("linear_forward: input width mismatch");
  Tensor2<T> y(x.rows, layer.out_features());
  map(y).noalias() = cmap(x) * cmap(layer.weight).transpose();
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(layer.bias.data(),
                                                          layer.out_features());
  map(y).rowwise() += b;
  check_finite(y, "linear_forward");
  return y;
}

template <typename T>
Tensor2<T> linear_backward(Linear<T>& layer, const Tensor2<T>& x, const Tensor2<T>& dy,
                           bool want_dx) {
  if (x.rows != dy.rows || x.cols != layer.in_features() ||
      dy.cols != layer.out_features())
    throw std::invalid_argument("linear_backward: shape mismatch");
  map(layer.weight_grad).noalias() += cmap(dy).transpose() * cmap(x);
  // Fixed-order accumulation. An Eigen reduction over mapped memory picks its
  // summation order from the pointer's alignment, so results would depend on
  // where the heap happened to place dy.
  T* db = layer.bias_grad.data();
  for (int r = 0; r < dy.rows; ++r) {
    const T* g = dy.row(r);
    for (int c = 0; c < dy.cols; ++c) db[c] += g[c];
  }
  Tensor2<T> dx;
  if (want_dx) {
    dx = Tensor2<T>(x.rows, x.cols);
    map(dx).noalias() = cmap(dy) * cmap(layer.weight);
  }
  return dx;
}

template <typename T>
Tensor2<T> relu_forward(const Tensor2<T>& x) {
  Tensor2<T> y = x;
  for (T& v : y.data) v = v > T(0) ? v : T(0);
  check_finite(y, "relu_forward");
  return y;
}

template <typename T>
Tensor2<T> relu_backward(const Tensor2<T>& y, const Tensor2<T>& dy) {
  if (y.rows != dy.rows || y.cols != dy.cols)
    throw std::invalid_argument("relu_backward: shape mismatch");
  Tensor2<T> dx(dy.rows, dy.cols);
  for (std::size_t i = 0; i < dx.data.size(); ++i)
    dx.data[i] = y.data[i] > T(0) ? dy.data[i] : T(0);
  return dx;
}

template <typename T>
std::vector<T> sigmoid_forward(std::span<const T> x) {
  std::vector<T> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = double(x[i]);
    // Evaluate on the negative side only; exp never overflows.
    y[i] = v >= 0 ? T(1.0 / (1.0 + std::exp(-v)))
                  : T(std::exp(v) / (1.0 + std::exp(v)));
  }
  check_finite(std::span<const T>(y), "sigmoid_forward");
  return y;
}

template <typename T>
Tensor2<T> maxpool_rows(const Tensor2<T>& x, std::span<const int> offsets,
                        Tensor2<int>* argmax) {
  check_offsets(offsets, x.rows);
  const int groups = int(offsets.size()) - 1;
  Tensor2<T> y(groups, x.cols);
  if (argmax) *argmax = Tensor2<int>(groups, x.cols);
  for (int g = 0; g < groups; ++g) {
    const int lo = offsets[g], hi = offsets[std::size_t(g) + 1];
    T* out = y.row(g);
    int* am = argmax ? argmax->row(g) : nullptr;
    for (int c = 0; c < x.cols; ++c) {
      out[c] = x(lo, c);
      if (am) am[c] = lo;
    }
    for (int r = lo + 1; r < hi; ++r) {
      const T* in = x.row(r);
      for (int c = 0; c < x.cols; ++c) {
        if (in[c] > out[c]) {  // strict: ties keep the first row
          out[c] = in[c];
          if (am) am[c] = r;
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor2<T> maxpool_rows_backward(const Tensor2<int>& argmax, int in_rows,
                                 const Tensor2<T>& dy) {
  if (argmax.rows != dy.rows || argmax.cols != dy.cols)
    throw std::invalid_argument("maxpool_backward: shape mismatch");
  Tensor2<T> dx(in_rows, dy.cols);
  for (int g = 0; g < dy.rows; ++g)
    for (int c = 0; c < dy.cols; ++c) dx(argmax(g, c), c) += dy(g, c);
  return dx;
}

template <typename T>
Tensor2<T> avgpool_rows(const Tensor2<T>& x, std::span<const int> offsets) {
  check_offsets(offsets, x.rows);
  const int groups = int(offsets.size()) - 1;
  Tensor2<T> y(groups, x.cols);
  for (int g = 0; g < groups; ++g) {
    const int lo = offsets[g], hi = offsets[std::size_t(g) + 1];
    T* out = y.row(g);
    for (int r = lo; r < hi; ++r) {
      const T* in = x.row(r);
      for (int c = 0; c < x.cols; ++c) out[c] += in[c];
    }
    const T inv = T(1) / T(hi - lo);
    for (int c = 0; c < x.cols; ++c) out[c] *= inv;
  }
  return y;
}

template <typename T>
Tensor2<T> avgpool_rows_backward(std::span<const int> offsets, int in_rows,
                                 const Tensor2<T>& dy) {
  check_offsets(offsets, in_rows);
  if (int(offsets.size()) - 1 != dy.rows)
    throw std::invalid_argument("avgpool_backward: shape mismatch");
  Tensor2<T> dx(in_rows, dy.cols);
  for (int g = 0; g < dy.rows; ++g) {
    const int lo = offsets[g], hi = offsets[std::size_t(g) + 1];
    const T inv = T(1) / T(hi - lo);
    const T* grad = dy.row(g);
    for (int r = lo; r < hi; ++r) {
      T* out = dx.row(r);
      for (int c = 0; c < dy.cols; ++c) out[c] = grad[c] * inv;
    }
  }
  return dx;
}

template <typename T>
ScalarLossResult<T> bce_with_logits(std::span<const T> logits,
                                    std::span<const std::uint8_t> targets,
                                    std::span<const double> weights) {
  const std::size_t n = logits.size();
  if (targets.size() != n || weights.size() != n)
    throw std::invalid_argument("bce_with_logits: length mismatch");
  check_finite(logits, "bce_with_logits");

  ScalarLossResult<T> r;
  r.grad.resize(n);
  double loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = double(logits[i]);
    const double t = double(targets[i]);
    const double w = weights[i];
    if (targets[i] > 1) throw std::invalid_argument("bce_with_logits: target not in {0,1}");
    if (!(w >= 0)) throw std::invalid_argument("bce_with_logits: negative weight");
    loss += w * (std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x))));
    const double sig = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                              : std::exp(x) / (1.0 + std::exp(x));
    r.grad[i] = T(w * (sig - t));
  }
  r.value = loss;
  if (!std::isfinite(loss)) throw std::runtime_error("bce_with_logits: non-finite loss");
  return r;
}

namespace {

template <typename T, bool Squared>
ScalarLossResult<T> masked_regression(std::span<const T> pred, std::span<const T> target,
                                      std::span<const std::uint8_t> mask,
                                      std::span<const double> weights) {
  const std::size_t n = pred.size();
  if (target.size() != n || mask.size() != n)
    throw std::invalid_argument("regression loss: length mismatch");
  if (!weights.empty() && weights.size() != n)
    throw std::invalid_argument("regression loss: weight length mismatch");

  ScalarLossResult<T> r;
  r.grad.assign(n, T(0));

  double uniform_w = 0;
  if (weights.empty()) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) count += mask[i] ? 1 : 0;
    if (count == 0) return r;  // nothing supervised: zero loss, zero gradient
    uniform_w = 1.0 / double(count);
  }

  double loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const double w = weights.empty() ? uniform_w : weights[i];
    const double d = double(pred[i]) - double(target[i]);
    if constexpr (Squared) {
      loss += w * d * d;
      r.grad[i] = T(w * 2.0 * d);
    } else {
      loss += w * std::abs(d);
      r.grad[i] = T(d > 0 ? w : (d < 0 ? -w : 0.0));
    }
  }
  r.value = loss;
  if (!std::isfinite(loss)) throw std::runtime_error("regression loss: non-finite loss");
  return r;
}

}  // namespace

template <typename T>
ScalarLossResult<T> l1_loss(std::span<const T> pred, std::span<const T> target,
                            std::span<const std::uint8_t> mask,
                            std::span<const double> weights) {
  return masked_regression<T, false>(pred, target, mask, weights);
}

template <typename T>
ScalarLossResult<T> l2_loss(std::span<const T> pred, std::span<const T> target,
                            std::span<const std::uint8_t> mask,
                            std::span<const double> weights) {
  return masked_regression<T, true>(pred, target, mask, weights);
}

template <typename T>
CeResult<T> softmax_cross_entropy(const Tensor2<T>& logits,
                                  std::span<const std::uint32_t> labels) {
  if (labels.size() != std::size_t(logits.rows))
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  check_finite(logits, "softmax_cross_entropy");
  CeResult<T> r;
  r.dlogits = Tensor2<T>(logits.rows, logits.cols);
  const double inv_n = 1.0 / double(logits.rows);
  double loss = 0;
  for (int i = 0; i < logits.rows; ++i) {
    const T* row = logits.row(i);
    if (labels[std::size_t(i)] >= std::uint32_t(logits.cols))
      throw std::invalid_argument("softmax_cross_entropy: label out of range");
    double mx = double(row[0]);
    for (int c = 1; c < logits.cols; ++c) mx = std::max(mx, double(row[c]));
    double denom = 0;
    for (int c = 0; c < logits.cols; ++c) denom += std::exp(double(row[c]) - mx);
    const double logz = mx + std::log(denom);
    loss += (logz - double(row[labels[std::size_t(i)]])) * inv_n;
    T* grad = r.dlogits.row(i);
    for (int c = 0; c < logits.cols; ++c) {
      const double p = std::exp(double(row[c]) - logz);
      grad[c] = T((p - (labels[std::size_t(i)] == std::uint32_t(c) ? 1.0 : 0.0)) * inv_n);
    }
  }
  r.value = loss;
  return r;
}

template <typename T>
void AdamW<T>::step(std::span<const ParamView<T>> params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].size, T(0));
      v_[i].assign(params[i].size, T(0));
    }
  }
  if (m_.size() != params.size())
    throw std::invalid_argument("adamw: parameter group count changed");

  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_));

  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamView<T>& p = params[i];
    if (m_[i].size() != p.size)
      throw std::invalid_argument("adamw: parameter size changed");
    T* m = m_[i].data();
    T* v = v_[i].data();
    for (std::size_t j = 0; j < p.size; ++j) {
      const double g = double(p.grad[j]);
      double w = double(p.value[j]);
      w -= cfg_.lr * cfg_.weight_decay * w;  // decoupled decay
      const double mj = cfg_.beta1 * double(m[j]) + (1.0 - cfg_.beta1) * g;
      const double vj = cfg_.beta2 * double(v[j]) + (1.0 - cfg_.beta2) * g * g;
      m[j] = T(mj);
      v[j] = T(vj);
      w -= cfg_.lr * (mj / bc1) / (std::sqrt(vj / bc2) + cfg_.eps);
      if (!std::isfinite(w)) throw std::runtime_error("adamw: non-finite update");
      p.value[j] = T(w);
    }
  }
}

template <typename T>
void AdamW<T>::restore(std::int64_t step, std::vector<std::vector<T>> m,
                       std::vector<std::vector<T>> v) {
  if (m.size() != v.size()) throw std::invalid_argument("adamw: moment count mismatch");
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

double cosine_lr(int epoch, int total_epochs, double base_lr) {
  if (total_epochs < 1) throw std::invalid_argument("cosine_lr: total_epochs < 1");
  if (epoch < 0 || epoch >= total_epochs)
    throw std::invalid_argument("cosine_lr: epoch out of range");
  if (total_epochs == 1) return base_lr;
  const double f = double(epoch) / double(total_epochs - 1);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * f));
}

// The library trains in float and verifies gradients in double.
#define VISOCC_INSTANTIATE(T)                                                          \
  template void check_finite<T>(std::span<const T>, const char*);                      \
  template struct Linear<T>;                                                           \
  template Tensor2<T> linear_forward<T>(const Linear<T>&, const Tensor2<T>&);          \
  template Tensor2<T> linear_backward<T>(Linear<T>&, const Tensor2<T>&,                \
                                         const Tensor2<T>&, bool);                     \
  template Tensor2<T> relu_forward<T>(const Tensor2<T>&);                              \
  template Tensor2<T> relu_backward<T>(const Tensor2<T>&, const Tensor2<T>&);          \
  template std::vector<T> sigmoid_forward<T>(std::span<const T>);                      \
  template Tensor2<T> maxpool_rows<T>(const Tensor2<T>&, std::span<const int>,         \
                                      Tensor2<int>*);                                  \
  template Tensor2<T> maxpool_rows_backward<T>(const Tensor2<int>&, int,               \
                                               const Tensor2<T>&);                     \
  template Tensor2<T> avgpool_rows<T>(const Tensor2<T>&, std::span<const int>);        \
  template Tensor2<T> avgpool_rows_backward<T>(std::span<const int>, int,              \
                                               const Tensor2<T>&);                     \
  template ScalarLossResult<T> bce_with_logits<T>(std::span<const T>,                  \
                                                  std::span<const std::uint8_t>,       \
                                                  std::span<const double>);            \
  template ScalarLossResult<T> l1_loss<T>(std::span<const T>, std::span<const T>,      \
                                          std::span<const std::uint8_t>,               \
                                          std::span<const double>);                    \
  template ScalarLossResult<T> l2_loss<T>(std::span<const T>, std::span<const T>,      \
                                          std::span<const std::uint8_t>,               \
                                          std::span<const double>);                    \
  template CeResult<T> softmax_cross_entropy<T>(const Tensor2<T>&,                     \
                                                std::span<const std::uint32_t>);       \
  template class AdamW<T>;

VISOCC_INSTANTIATE(float)
VISOCC_INSTANTIATE(double)
#undef VISOCC_INSTANTIATE

}  // namespace visocc
