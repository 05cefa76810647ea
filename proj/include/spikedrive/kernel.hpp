#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "codec.hpp"
#include "error.hpp"
#include "matrix.hpp"
#include "quant.hpp"

namespace spikedrive {

namespace detail {

inline void checked_add(std::int64_t& acc, std::int64_t v) {
  if (__builtin_add_overflow(acc, v, &acc)) fail(ErrorCode::IntegerOverflow, "accumulator overflow");
}

inline void checked_sub(std::int64_t& acc, std::int64_t v) {
  if (__builtin_sub_overflow(acc, v, &acc)) fail(ErrorCode::IntegerOverflow, "accumulator overflow");
}

inline std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t out;
  if (__builtin_mul_overflow(a, b, &out)) fail(ErrorCode::IntegerOverflow, "product overflow");
  return out;
}

template <typename T>
struct AccumulatorOf;
template <>
struct AccumulatorOf<std::int64_t> {
  using type = std::int64_t;
};
template <>
struct AccumulatorOf<double> {
  using type = long double;
};

template <typename Acc, typename T>
inline void add_into(Acc& acc, T v) {
  if constexpr (std::is_integral_v<Acc>) checked_add(acc, v);
  else acc += v;
}

template <typename Acc, typename T>
inline void sub_into(Acc& acc, T v) {
  if constexpr (std::is_integral_v<Acc>) checked_sub(acc, v);
  else acc -= v;
}

}  // namespace detail

/// Kernel weights are exact integers or reals; accumulators follow (int64 with overflow
/// detection, or long double narrowed to double on return).
template <typename T>
concept KernelScalar = std::is_same_v<T, std::int64_t> || std::is_same_v<T, double>;

template <KernelScalar T>
using AccumulatorMatrix = Matrix<T>;

/// Work counters. `column_adds` counts one per spike event applied.
struct KernelStats {
  std::uint64_t column_adds = 0;

  KernelStats& operator+=(const KernelStats& o) noexcept {
    column_adds += o.column_adds;
    return *this;
  }
};

/// y = W x for x in {0,1}^n, computed as the sum of the columns of W selected by x.
template <KernelScalar T>
std::vector<T> spmv_binary(const Matrix<T>& w, std::span<const std::int64_t> x, KernelStats* stats = nullptr) {
  require(x.size() == w.cols(), ErrorCode::DimMismatch,
          "spike vector length " + std::to_string(x.size()) + " != weight cols " + std::to_string(w.cols()));
  using Acc = typename detail::AccumulatorOf<T>::type;
  std::vector<Acc> acc(w.rows(), Acc{});
  std::uint64_t adds = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(x[i] == 0 || x[i] == 1, ErrorCode::InvalidArgument, "binary spike vector holds a non-binary entry");
    if (x[i] == 0) continue;
    ++adds;
    for (std::size_t r = 0; r < w.rows(); ++r) detail::add_into(acc[r], w(r, i));
  }
  if (stats) stats->column_adds += adds;
  return std::vector<T>(acc.begin(), acc.end());
}

/// y = W x for x in {-1,0,1}^n: positive spikes add their column, negative spikes subtract it.
template <KernelScalar T>
std::vector<T> spmv_ternary(const Matrix<T>& w, std::span<const std::int64_t> x, KernelStats* stats = nullptr) {
  require(x.size() == w.cols(), ErrorCode::DimMismatch,
          "spike vector length " + std::to_string(x.size()) + " != weight cols " + std::to_string(w.cols()));
  using Acc = typename detail::AccumulatorOf<T>::type;
  std::vector<Acc> acc(w.rows(), Acc{});
  std::uint64_t adds = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(x[i] >= -1 && x[i] <= 1, ErrorCode::InvalidArgument, "ternary spike vector holds a non-ternary entry");
    if (x[i] == 0) continue;
    ++adds;
    if (x[i] > 0)
      for (std::size_t r = 0; r < w.rows(); ++r) detail::add_into(acc[r], w(r, i));
    else
      for (std::size_t r = 0; r < w.rows(); ++r) detail::sub_into(acc[r], w(r, i));
  }
  if (stats) stats->column_adds += adds;
  return std::vector<T>(acc.begin(), acc.end());
}

/// Schoolbook triple loop; exact (overflow-checked) for integers.
template <KernelScalar T>
Matrix<T> dense_matmul_reference(const Matrix<T>& a, const Matrix<T>& b) {
  require(a.cols() == b.rows(), ErrorCode::DimMismatch,
          "inner dims " + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
  using Acc = typename detail::AccumulatorOf<T>::type;
  Matrix<T> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      Acc acc{};
      for (std::size_t k = 0; k < a.cols(); ++k) {
        if constexpr (std::is_integral_v<T>) detail::checked_add(acc, detail::checked_mul(a(i, k), b(k, j)));
        else acc += static_cast<Acc>(a(i, k)) * b(k, j);
      }
      out(i, j) = static_cast<T>(acc);
    }
  }
  return out;
}

struct KernelOptions {
  /// Processing order of the T * D_steps slots; empty means natural order.
  std::span<const std::size_t> step_order = {};
  /// Output rows are split into this many contiguous blocks, one thread each.
  unsigned threads = 1;
};

namespace detail {

inline std::vector<std::size_t> resolve_order(const SpikeTrain& train, std::span<const std::size_t> order) {
  std::vector<std::size_t> out;
  if (order.empty()) {
    out.resize(train.steps.size());
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  require(order.size() == train.steps.size(), ErrorCode::InvalidArgument, "step order must cover every slot");
  std::vector<bool> seen(train.steps.size(), false);
  for (std::size_t s : order) {
    require(s < train.steps.size() && !seen[s], ErrorCode::InvalidArgument, "step order is not a permutation");
    seen[s] = true;
  }
  return {order.begin(), order.end()};
}

}  // namespace detail

/// Multiplication-free matmul: fold(train) * W accumulated straight from the event lists.
///
/// The train's columns are the contraction dimension and must equal W's rows. Each event
/// (row r, feature i, sign s) adds s * W[i, :] to output row r of its outer step, so the
/// output stacks T blocks of `train.rows` rows. The train is never densified.
template <KernelScalar T>
AccumulatorMatrix<T> spike_matmul(const Matrix<T>& w, const SpikeTrain& train, KernelStats* stats = nullptr,
                                  const KernelOptions& opts = {}) {
  require(train.cols == w.rows(), ErrorCode::DimMismatch,
          "train width " + std::to_string(train.cols) + " != weight rows " + std::to_string(w.rows()));
  require(train.steps.size() == std::size_t{train.T} * train.d_steps, ErrorCode::ShapeMismatch,
          "train step table is inconsistent with T x D");
  using Acc = typename detail::AccumulatorOf<T>::type;
  const std::vector<std::size_t> order = detail::resolve_order(train, opts.step_order);
  const std::size_t n = train.cols;
  const std::size_t m = w.cols();
  const std::size_t out_rows = train.rows * train.T;
  std::vector<Acc> acc(out_rows * m, Acc{});
  const bool ternary = train.polarity == Polarity::Ternary;

  // Rows [r0, r1) within each outer step; events are sorted, so each step's slice is contiguous.
  auto work = [&](std::size_t r0, std::size_t r1, std::uint64_t& adds) {
    for (std::size_t slot : order) {
      const SpikeStep& step = train.steps[slot];
      const std::size_t t = slot / train.d_steps;
      auto first = std::lower_bound(step.index.begin(), step.index.end(), r0 * n);
      auto last = std::lower_bound(first, step.index.end(), r1 * n);
      for (auto it = first; it != last; ++it) {
        const std::size_t e = static_cast<std::size_t>(it - step.index.begin());
        const std::size_t r = *it / n;
        const std::size_t i = *it % n;
        Acc* dst = acc.data() + (t * train.rows + r) * m;
        const auto src = w.row_span(i);
        if (ternary && step.sign[e] < 0)
          for (std::size_t j = 0; j < m; ++j) detail::sub_into(dst[j], src[j]);
        else
          for (std::size_t j = 0; j < m; ++j) detail::add_into(dst[j], src[j]);
        ++adds;
      }
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(opts.threads, 1, std::max<std::size_t>(train.rows, 1));
  std::vector<std::uint64_t> adds(threads, 0);
  if (threads == 1) {
    work(0, train.rows, adds[0]);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t chunk = (train.rows + threads - 1) / threads;
    for (std::size_t k = 0; k < threads; ++k) {
      const std::size_t r0 = std::min(train.rows, k * chunk);
      const std::size_t r1 = std::min(train.rows, r0 + chunk);
      pool.emplace_back([&, k, r0, r1] {
        try {
          work(r0, r1, adds[k]);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  if (stats)
    for (std::uint64_t a : adds) stats->column_adds += a;
  Matrix<T> out(out_rows, m);
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<T>(acc[i]);
  return out;
}

/// Per-row signed spike totals of each outer step (the row sums of the folded counts),
/// computed from the events by addition only.
inline std::vector<std::int64_t> spike_row_sums(const SpikeTrain& train) {
  std::vector<std::int64_t> sums(train.rows * train.T, 0);
  for (std::size_t slot = 0; slot < train.steps.size(); ++slot) {
    const SpikeStep& step = train.steps[slot];
    const std::size_t base = (slot / train.d_steps) * train.rows;
    for (std::size_t e = 0; e < step.size(); ++e) {
      const std::int64_t s = train.polarity == Polarity::Ternary ? step.sign[e] : 1;
      sums[base + step.index[e] / train.cols] += s;
    }
  }
  return sums;
}

inline std::vector<std::int64_t> row_sums(const IntMatrix& m) {
  std::vector<std::int64_t> out(m.rows(), 0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::int64_t v : m.row_span(r)) detail::checked_add(out[r], v);
  return out;
}

inline std::vector<std::int64_t> col_sums(const IntMatrix& m) {
  std::vector<std::int64_t> out(m.cols(), 0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) detail::checked_add(out[c], m(r, c));
  return out;
}

/// Maps an integer product A_q B_q back to reals, once, outside the accumulation loop:
/// Y = dA dB (acc - zB rowsum(A_q) - zA colsum(B_q) + n zA zB).
inline RealMatrix dequantize_product(const IntMatrix& acc, const QuantParams& a, std::span<const std::int64_t> a_row_sums,
                                     const QuantParams& b, std::span<const std::int64_t> b_col_sums,
                                     std::size_t inner) {
  require(a_row_sums.size() == acc.rows() && b_col_sums.size() == acc.cols(), ErrorCode::DimMismatch,
          "zero-point correction sums do not match the accumulator");
  RealMatrix out(acc.rows(), acc.cols());
  const double scale = a.delta * b.delta;
  const long double zz = static_cast<long double>(inner) * a.zero_point * b.zero_point;
  for (std::size_t r = 0; r < acc.rows(); ++r) {
    for (std::size_t c = 0; c < acc.cols(); ++c) {
      const long double v = static_cast<long double>(acc(r, c)) - static_cast<long double>(b.zero_point) * a_row_sums[r] -
                            static_cast<long double>(a.zero_point) * b_col_sums[c] + zz;
      out(r, c) = static_cast<double>(v * scale);
    }
  }
  return out;
}

}  // namespace spikedrive
