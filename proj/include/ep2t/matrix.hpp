#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ep2t {

/// Dense row-major matrix. Used for feature matrices (rows = points or
/// centers, cols = channels) and for layer parameters (rows = inputs).
template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  T operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  T* row(std::size_t r) { return data.data() + r * cols; }
  const T* row(std::size_t r) const { return data.data() + r * cols; }

  std::span<T> values() { return data; }
  std::span<const T> values() const { return data; }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

using FeatureMatrix = Matrix<float>;

}  // namespace ep2t
