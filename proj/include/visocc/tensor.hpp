#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace visocc {

// Dense row-major matrix. Training uses float; gradient verification
// instantiates the same code with double.
template <typename T>
struct Tensor2 {
  int rows = 0, cols = 0;
  std::vector<T> data;

  Tensor2() = default;
  Tensor2(int r, int c) : rows(r), cols(c), data(std::size_t(r) * std::size_t(c), T(0)) {}

  static Tensor2 zeros(int r, int c) { return Tensor2(r, c); }

  T& operator()(int r, int c) { return data[std::size_t(r) * cols + c]; }
  T operator()(int r, int c) const { return data[std::size_t(r) * cols + c]; }
  T* row(int r) { return data.data() + std::size_t(r) * cols; }
  const T* row(int r) const { return data.data() + std::size_t(r) * cols; }
  std::size_t size() const { return data.size(); }
  void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

// Throws std::runtime_error when any element is NaN or infinite. The scan is
// a single summation pass: any non-finite input poisons the sum.
template <typename T>
void check_finite(std::span<const T> values, const char* what);

template <typename T>
void check_finite(const Tensor2<T>& t, const char* what) {
  check_finite(std::span<const T>(t.data), what);
}

}  // namespace visocc
