#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"
#include "rotation.hpp"

namespace spikedrive {

/// q-th quantile over every element, interpolating linearly between adjacent order statistics
/// (position q * (N - 1) in the sorted values).
inline double quantile(const RealMatrix& u, double q) {
  require(!u.empty(), ErrorCode::EmptyInput, "quantile of an empty matrix");
  require(q > 0.0 && q < 1.0, ErrorCode::InvalidArgument, "quantile ratio must lie in (0, 1)");
  std::vector<double> v(u.values().begin(), u.values().end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  double b = a;
  if (hi != lo) b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
  return a + (pos - static_cast<double>(lo)) * (b - a);
}

/// Quantile-shifted ReLU: max(U - tau, 0).
inline RealMatrix qsrelu(const RealMatrix& u, double tau) {
  require(std::isfinite(tau), ErrorCode::InvalidArgument, "clip threshold must be finite");
  RealMatrix out(u.rows(), u.cols());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = std::max(u[i] - tau, 0.0);
  return out;
}

inline double zero_fraction(const RealMatrix& u) {
  if (u.empty()) return 0.0;
  const auto zeros = std::count(u.values().begin(), u.values().end(), 0.0);
  return static_cast<double>(zeros) / static_cast<double>(u.size());
}

enum class ClipMode : std::uint8_t { Calibrate, Inference };

inline constexpr double kDefaultClipAlpha = 0.99;

/// Per-layer clip threshold. tau moves only in Calibrate mode; Inference reuses the frozen value.
struct ClipState {
  double q = 0.5;
  double alpha = kDefaultClipAlpha;
  double tau = 0.0;
  bool calibrated = false;
  ClipMode mode = ClipMode::Calibrate;

  static ClipState make(double q, double alpha = kDefaultClipAlpha) {
    require(q > 0.0 && q < 1.0, ErrorCode::InvalidArgument, "quantile ratio must lie in (0, 1)");
    require(alpha >= 0.0 && alpha < 1.0, ErrorCode::InvalidArgument, "EMA factor must lie in [0, 1)");
    return ClipState{q, alpha, 0.0, false, ClipMode::Calibrate};
  }

  /// Frozen state for inference with a recorded threshold.
  static ClipState frozen(double q, double alpha, double tau) {
    ClipState s = make(q, alpha);
    require(std::isfinite(tau), ErrorCode::InvalidArgument, "clip threshold must be finite");
    s.tau = tau;
    s.calibrated = true;
    s.mode = ClipMode::Inference;
    return s;
  }

  ClipState freeze() const {
    require(calibrated, ErrorCode::NotCalibrated, "cannot freeze an uncalibrated clip state");
    ClipState s = *this;
    s.mode = ClipMode::Inference;
    return s;
  }

  friend bool operator==(const ClipState&, const ClipState&) = default;
};

/// One EMA update of tau from a batch: the first call takes the batch quantile as-is.
inline ClipState calibrate_step(const ClipState& state, const RealMatrix& u) {
  require(state.mode == ClipMode::Calibrate, ErrorCode::WrongMode, "calibrate_step on an inference-mode clip state");
  ClipState next = state;
  const double batch = quantile(u, state.q);
  next.tau = state.calibrated ? state.alpha * state.tau + (1.0 - state.alpha) * batch : batch;
  next.calibrated = true;
  return next;
}

/// Rotate, then clip with the state's threshold: ReLU(U Q - tau). Consumers of the result must
/// use rotated weights Q^T W.
inline RealMatrix clip_rotated(const RealMatrix& u, const OrthogonalOp& op, const ClipState& state) {
  require(op.dim() == u.cols(), ErrorCode::DimMismatch, "rotation dim must match activation width");
  require(state.calibrated, ErrorCode::NotCalibrated, "clip threshold has not been calibrated");
  return qsrelu(op.apply(u), state.tau);
}

}  // namespace spikedrive
