#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "error.hpp"

namespace spikedrive {

/// Dense row-major 2-D array. Real instantiations reject non-finite values at construction.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, T{}) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, ErrorCode::ShapeMismatch,
            "data length " + std::to_string(data_.size()) + " != " + std::to_string(rows_) + "x" +
                std::to_string(cols_));
    if constexpr (std::is_floating_point_v<T>) {
      for (T v : data_) require(std::isfinite(v), ErrorCode::InvalidArgument, "non-finite matrix entry");
    }
  }

  static Matrix row(std::vector<T> values) {
    const std::size_t n = values.size();
    return Matrix(1, n, std::move(values));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> row_span(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row_span(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  Matrix transposed() const {
    Matrix out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
    return out;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using RealMatrix = Matrix<double>;
using IntMatrix = Matrix<std::int64_t>;

template <typename T>
bool same_shape(const Matrix<T>& a, const Matrix<T>& b) noexcept {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

inline RealMatrix to_real(const IntMatrix& m) {
  RealMatrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = static_cast<double>(m[i]);
  return out;
}

inline double frobenius_sq(const RealMatrix& m) {
  long double acc = 0;
  for (double v : m.values()) acc += static_cast<long double>(v) * v;
  return static_cast<double>(acc);
}

/// Real matrix product, row-major, accumulated in long double.
inline RealMatrix matmul(const RealMatrix& a, const RealMatrix& b) {
  require(a.cols() == b.rows(), ErrorCode::DimMismatch,
          "matmul inner dims " + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
  RealMatrix out(a.rows(), b.cols());
  std::vector<long double> acc(b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::fill(acc.begin(), acc.end(), 0.0L);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const long double av = a(r, k);
      if (av == 0) continue;
      const auto brow = b.row_span(k);
      for (std::size_t c = 0; c < b.cols(); ++c) acc[c] += av * brow[c];
    }
    for (std::size_t c = 0; c < b.cols(); ++c) out(r, c) = static_cast<double>(acc[c]);
  }
  return out;
}

inline double cosine_similarity(const RealMatrix& a, const RealMatrix& b) {
  require(same_shape(a, b), ErrorCode::ShapeMismatch, "cosine of differently shaped matrices");
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  if (na == 0 && nb == 0) return 1.0;
  if (na == 0 || nb == 0) return 0.0;
  const double c = static_cast<double>(dot / std::sqrt(na * nb));
  return std::clamp(c, -1.0, 1.0);
}

inline double mean_squared_error(const RealMatrix& a, const RealMatrix& b) {
  require(same_shape(a, b), ErrorCode::ShapeMismatch, "mse of differently shaped matrices");
  if (a.empty()) return 0.0;
  long double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(a[i]) - b[i];
    acc += d * d;
  }
  return static_cast<double>(acc / static_cast<long double>(a.size()));
}

constexpr bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace spikedrive
