#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "error.hpp"
#include "matrix.hpp"

namespace spikedrive {

enum class QuantScheme : std::uint8_t { Asymmetric, Symmetric };

/// Per-tensor uniform quantization grid: real x maps to clamp(round(x / delta) + zero_point, lo, hi).
struct QuantParams {
  int bits = 0;
  QuantScheme scheme = QuantScheme::Asymmetric;
  double delta = 1.0;
  std::int64_t zero_point = 0;
  std::int64_t lo = 0;
  std::int64_t hi = 0;

  static QuantParams asymmetric(int bits, double delta, std::int64_t zero_point) {
    validate_bits(bits, 1);
    require(delta > 0 && std::isfinite(delta), ErrorCode::InvalidArgument, "delta must be positive");
    return {bits, QuantScheme::Asymmetric, delta, zero_point, 0, (std::int64_t{1} << bits) - 1};
  }

  static QuantParams symmetric(int bits, double delta, std::int64_t zero_point = 0) {
    validate_bits(bits, 2);
    require(delta > 0 && std::isfinite(delta), ErrorCode::InvalidArgument, "delta must be positive");
    const std::int64_t half = std::int64_t{1} << (bits - 1);
    return {bits, QuantScheme::Symmetric, delta, zero_point, -half, half - 1};
  }

  /// The signed grid sharing `asym`'s step and offsets, shifted down by 2^(B-1) levels.
  static QuantParams aligned_symmetric(const QuantParams& asym) {
    return symmetric(asym.bits, asym.delta, asym.zero_point - (std::int64_t{1} << (asym.bits - 1)));
  }

  bool contains(std::int64_t q) const noexcept { return q >= lo && q <= hi; }

  friend bool operator==(const QuantParams&, const QuantParams&) = default;

 private:
  static void validate_bits(int bits, int min_bits) {
    require(bits >= min_bits && bits <= 16, ErrorCode::InvalidArgument,
            "bit width " + std::to_string(bits) + " outside [" + std::to_string(min_bits) + ", 16]");
  }
};

/// Round to nearest, ties to even.
inline double round_half_even(double x) noexcept {
  const double r = std::round(x);
  if (std::abs(x - std::trunc(x)) == 0.5) return 2.0 * std::round(x / 2.0);
  return r;
}

inline std::int64_t quantize_value(double x, const QuantParams& p) noexcept {
  const auto q = static_cast<std::int64_t>(round_half_even(x / p.delta)) + p.zero_point;
  return std::clamp(q, p.lo, p.hi);
}

/// Applies an existing grid to every element.
inline IntMatrix quantize_with(const RealMatrix& x, const QuantParams& p) {
  IntMatrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = quantize_value(x[i], p);
  return out;
}

/// Min-max calibration of a per-tensor grid.
inline QuantParams calibrate(const RealMatrix& x, int bits, QuantScheme scheme) {
  require(!x.empty(), ErrorCode::EmptyInput, "cannot calibrate an empty matrix");
  const auto [mn, mx] = std::minmax_element(x.values().begin(), x.values().end());
  if (scheme == QuantScheme::Asymmetric) {
    require(*mx > *mn, ErrorCode::DegenerateRange, "constant matrix has no asymmetric range");
    const double levels = static_cast<double>((std::int64_t{1} << bits) - 1);
    const double delta = (*mx - *mn) / levels;
    return QuantParams::asymmetric(bits, delta, -static_cast<std::int64_t>(round_half_even(*mn / delta)));
  }
  const double max_abs = std::max(std::abs(*mn), std::abs(*mx));
  require(max_abs > 0, ErrorCode::DegenerateRange, "all-zero matrix has no symmetric range");
  require(bits >= 2, ErrorCode::InvalidArgument, "symmetric quantization needs at least 2 bits");
  const double positive_levels = static_cast<double>((std::int64_t{1} << (bits - 1)) - 1);
  return QuantParams::symmetric(bits, max_abs / positive_levels);
}

struct Quantized {
  IntMatrix values;
  QuantParams params;
};

inline Quantized quantize(const RealMatrix& x, int bits, QuantScheme scheme) {
  QuantParams p = calibrate(x, bits, scheme);
  return {quantize_with(x, p), p};
}

inline RealMatrix dequantize(const IntMatrix& q, const QuantParams& p) {
  RealMatrix out(q.rows(), q.cols());
  for (std::size_t i = 0; i < q.size(); ++i) {
    require(p.contains(q[i]), ErrorCode::OutOfRange,
            "quantized value " + std::to_string(q[i]) + " outside [" + std::to_string(p.lo) + ", " +
                std::to_string(p.hi) + "]");
    out[i] = static_cast<double>(q[i] - p.zero_point) * p.delta;
  }
  return out;
}

/// Element-wise quantization cost X * X.
inline RealMatrix quant_cost(const RealMatrix& x) {
  RealMatrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * x[i];
  return out;
}

/// Squared Frobenius norm of the round-trip residual.
inline double quant_error(const RealMatrix& x, int bits, QuantScheme scheme) {
  const auto [q, p] = quantize(x, bits, scheme);
  const RealMatrix back = dequantize(q, p);
  long double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double d = static_cast<long double>(x[i]) - back[i];
    acc += d * d;
  }
  return static_cast<double>(acc);
}

}  // namespace spikedrive
