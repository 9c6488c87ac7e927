#pragma once

#include <cstdint>
#include <initializer_list>

namespace visocc {

// SplitMix64 finalizer. Bijective on 64-bit words, good avalanche.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Folds a list of parts into a single key. Used to derive independent
// sub-seeds from (seed, purpose, index, ...) tuples.
inline constexpr std::uint64_t derive_key(std::uint64_t base,
                                          std::initializer_list<std::uint64_t> parts) {
  std::uint64_t k = mix64(base);
  for (std::uint64_t p : parts) k = mix64(k ^ mix64(p + 0x632BE59BD9B4E019ull));
  return k;
}

// Counter-based generator: the i-th output depends only on (key, i), so
// per-point / per-ray streams are reproducible regardless of evaluation
// order or thread schedule. Splitting derives an unrelated stream.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(derive_key(seed, {stream})) {}

  SplitRng split(std::uint64_t idx) const {
    SplitRng r(0);
    r.key_ = derive_key(key_, {idx});
    r.ctr_ = 0;
    return r;
  }

  std::uint64_t next_u64() { return mix64(key_ + ctr_++ * 0x9E3779B97F4A7C15ull); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform in (0, 1]; safe as a log() argument.
  double uniform_pos() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

  // Unbiased integer in [0, n). Rejection on the top of the range.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t(0) - ~std::uint64_t(0) % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Standard normal via Box-Muller. Two draws per call, no cached state,
  // so the value at a given counter position never depends on call history.
  double gaussian();

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
};

}  // namespace visocc
