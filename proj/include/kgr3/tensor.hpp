#pragma once
// Row-major 2-D tensor. Everything the reader needs is a matrix; vectors
// are 1xN rows.

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <vector>

namespace kgr3 {

template <typename T>
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, T(0)) {}
  Tensor(std::size_t r, std::size_t c, std::vector<T> d)
      : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != rows * cols)
      throw std::invalid_argument("tensor data size mismatch");
  }

  std::size_t size() const { return rows * cols; }
  T& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  bool same_shape(const Tensor& o) const {
    return rows == o.rows && cols == o.cols;
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static Tensor zeros(std::size_t r, std::size_t c) { return Tensor(r, c); }

  static Tensor ones(std::size_t r, std::size_t c) {
    Tensor t(r, c);
    std::fill(t.data.begin(), t.data.end(), T(1));
    return t;
  }

  template <typename Rng>
  static Tensor randn(std::size_t r, std::size_t c, Rng& rng, T stddev) {
    Tensor t(r, c);
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    for (auto& v : t.data) v = static_cast<T>(dist(rng));
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace kgr3
