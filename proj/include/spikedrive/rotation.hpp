#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "matrix.hpp"
#include "quant.hpp"
#include "rng.hpp"

namespace spikedrive {

/// In-place Walsh-Hadamard butterfly on one vector. `v.size()` must be a power of two.
inline void fwht_inplace(std::span<double> v, bool normalize) {
  const std::size_t n = v.size();
  for (std::size_t h = 1; h < n; h <<= 1) {
    for (std::size_t i = 0; i < n; i += h << 1) {
      for (std::size_t j = i; j < i + h; ++j) {
        const double a = v[j];
        const double b = v[j + h];
        v[j] = a + b;
        v[j + h] = a - b;
      }
    }
  }
  if (normalize) {
    const double s = 1.0 / std::sqrt(static_cast<double>(n));
    for (double& x : v) x *= s;
  }
}

/// Row-wise Walsh-Hadamard transform, O(d log d) per row.
inline RealMatrix fwht(const RealMatrix& x, bool normalize = true) {
  require(is_power_of_two(x.cols()), ErrorCode::NotPowerOfTwo,
          "fwht needs a power-of-two width, got " + std::to_string(x.cols()));
  RealMatrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) fwht_inplace(out.row_span(r), normalize);
  return out;
}

enum class RotationKind : std::uint8_t { HadamardPlain, HadamardRandomSign, HaarQR };

inline std::string_view to_string(RotationKind k) noexcept {
  switch (k) {
    case RotationKind::HadamardPlain: return "hadamard";
    case RotationKind::HadamardRandomSign: return "hadamard-random-sign";
    case RotationKind::HaarQR: return "haar";
  }
  return "?";
}

/// An orthogonal d x d operator Q acting on row vectors (x -> xQ).
///
/// Hadamard kinds are applied as butterflies and never materialized. HaarQR keeps its dense
/// factor, since a Haar sample has no fast structure.
class OrthogonalOp {
 public:
  OrthogonalOp() = default;

  std::size_t dim() const noexcept { return dim_; }
  RotationKind kind() const noexcept { return kind_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Returns X Q.
  RealMatrix apply(const RealMatrix& x) const {
    check_width(x);
    switch (kind_) {
      case RotationKind::HadamardPlain:
        return fwht(x, true);
      case RotationKind::HadamardRandomSign: {
        RealMatrix out = fwht(x, true);
        for (std::size_t r = 0; r < out.rows(); ++r)
          for (std::size_t c = 0; c < dim_; ++c) out(r, c) *= signs_[c];
        return out;
      }
      case RotationKind::HaarQR:
        return matmul(x, dense_);
    }
    return x;
  }

  /// Returns X Q^T.
  RealMatrix apply_transpose(const RealMatrix& x) const {
    check_width(x);
    switch (kind_) {
      case RotationKind::HadamardPlain:
        return fwht(x, true);
      case RotationKind::HadamardRandomSign: {
        RealMatrix scaled = x;
        for (std::size_t r = 0; r < scaled.rows(); ++r)
          for (std::size_t c = 0; c < dim_; ++c) scaled(r, c) *= signs_[c];
        return fwht(scaled, true);
      }
      case RotationKind::HaarQR:
        return matmul(x, dense_.transposed());
    }
    return x;
  }

  /// Returns Q^T W for a weight W whose rows are indexed by this op's dimension.
  RealMatrix rotate_weight_rows(const RealMatrix& w) const {
    require(w.rows() == dim_, ErrorCode::DimMismatch,
            "weight rows " + std::to_string(w.rows()) + " != rotation dim " + std::to_string(dim_));
    return apply(w.transposed()).transposed();
  }

  /// Dense Q. Only test oracles and diagnostics should need this.
  RealMatrix materialize() const {
    RealMatrix eye(dim_, dim_);
    for (std::size_t i = 0; i < dim_; ++i) eye(i, i) = 1.0;
    return apply(eye);
  }

  static OrthogonalOp hadamard(std::size_t dim) {
    require(is_power_of_two(dim), ErrorCode::NotPowerOfTwo,
            "Hadamard rotation needs a power-of-two dim, got " + std::to_string(dim));
    OrthogonalOp op;
    op.dim_ = dim;
    op.kind_ = RotationKind::HadamardPlain;
    return op;
  }

  static OrthogonalOp hadamard_random_sign(std::size_t dim, std::uint64_t seed) {
    OrthogonalOp op = hadamard(dim);
    op.kind_ = RotationKind::HadamardRandomSign;
    op.seed_ = seed;
    Rng rng(seed);
    op.signs_.resize(dim);
    for (auto& s : op.signs_) s = static_cast<double>(rng.sign());
    return op;
  }

  /// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with R's diagonal made positive.
  static OrthogonalOp haar(std::size_t dim, std::uint64_t seed) {
    require(dim >= 1, ErrorCode::InvalidArgument, "rotation dim must be positive");
    Rng rng(seed);
    Eigen::MatrixXd g(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (Eigen::Index r = 0; r < g.rows(); ++r)
      for (Eigen::Index c = 0; c < g.cols(); ++c) g(r, c) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd& packed = qr.matrixQR();
    for (Eigen::Index c = 0; c < q.cols(); ++c)
      if (packed(c, c) < 0) q.col(c) *= -1.0;

    OrthogonalOp op;
    op.dim_ = dim;
    op.kind_ = RotationKind::HaarQR;
    op.seed_ = seed;
    op.dense_ = RealMatrix(dim, dim);
    for (std::size_t r = 0; r < dim; ++r)
      for (std::size_t c = 0; c < dim; ++c)
        op.dense_(r, c) = q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    return op;
  }

 private:
  void check_width(const RealMatrix& x) const {
    require(x.cols() == dim_, ErrorCode::DimMismatch,
            "input width " + std::to_string(x.cols()) + " != rotation dim " + std::to_string(dim_));
  }

  std::size_t dim_ = 0;
  RotationKind kind_ = RotationKind::HadamardPlain;
  std::uint64_t seed_ = 0;
  std::vector<double> signs_;
  RealMatrix dense_;
};

inline OrthogonalOp sample_orthogonal(std::size_t dim, RotationKind kind, std::uint64_t seed) {
  switch (kind) {
    case RotationKind::HadamardPlain: return OrthogonalOp::hadamard(dim);
    case RotationKind::HadamardRandomSign: return OrthogonalOp::hadamard_random_sign(dim, seed);
    case RotationKind::HaarQR: return OrthogonalOp::haar(dim, seed);
  }
  fail(ErrorCode::InvalidArgument, "unknown rotation kind");
}

/// Positive per-dimension RMSNorm scales.
class GammaVector {
 public:
  GammaVector() = default;
  explicit GammaVector(std::vector<double> values) : values_(std::move(values)) {
    for (double v : values_)
      require(std::isfinite(v) && v > 0, ErrorCode::InvalidArgument, "gamma entries must be positive");
  }
  static GammaVector ones(std::size_t dim) { return GammaVector(std::vector<double>(dim, 1.0)); }

  std::size_t dim() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }

 private:
  std::vector<double> values_;
};

inline RealMatrix scale_columns(const RealMatrix& x, const GammaVector& gamma) {
  require(gamma.dim() == x.cols(), ErrorCode::DimMismatch,
          "gamma dim " + std::to_string(gamma.dim()) + " != width " + std::to_string(x.cols()));
  RealMatrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= gamma[c];
  return out;
}

/// Activation-side ordering: scale by gamma first, then rotate (U Diag(gamma) Q).
inline RealMatrix gamma_sqp_transform(const RealMatrix& u, const GammaVector& gamma, const OrthogonalOp& op) {
  require(gamma.dim() == u.cols() && op.dim() == u.cols(), ErrorCode::DimMismatch,
          "gamma/rotation/activation widths disagree");
  return op.apply(scale_columns(u, gamma));
}

/// Baseline fusion that absorbs gamma into the weight: Q^T W Diag(gamma).
inline RealMatrix quarot_fuse_weights(const RealMatrix& w, const GammaVector& gamma, const OrthogonalOp& op) {
  require(op.dim() == w.rows(), ErrorCode::DimMismatch, "rotation dim must match weight rows");
  require(gamma.dim() == w.cols(), ErrorCode::DimMismatch, "gamma dim must match weight cols");
  return scale_columns(op.rotate_weight_rows(w), gamma);
}

struct DispersionResult {
  double measured = 0.0;
  double predicted = 0.0;

  double relative_error() const noexcept {
    if (predicted == 0.0) return measured == 0.0 ? 0.0 : INFINITY;
    return std::abs(measured / predicted - 1.0);
  }
};

/// Monte Carlo mean of the cost landing on `subset` after rotation, against (m/d) * total cost.
inline DispersionResult dispersion_estimate(const RealMatrix& x, std::span<const std::size_t> subset,
                                            RotationKind kind, std::size_t trials, std::uint64_t seed) {
  require(!subset.empty(), ErrorCode::EmptySubset, "dispersion subset is empty");
  require(trials >= 1, ErrorCode::InvalidArgument, "need at least one trial");
  std::vector<bool> seen(x.cols(), false);
  for (std::size_t i : subset) {
    require(i < x.cols(), ErrorCode::OutOfRange, "subset index " + std::to_string(i) + " out of range");
    require(!seen[i], ErrorCode::InvalidArgument, "duplicate subset index " + std::to_string(i));
    seen[i] = true;
  }

  const double total = frobenius_sq(x);
  Rng seeds(seed);
  long double sum = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const OrthogonalOp op = sample_orthogonal(x.cols(), kind, seeds.next_u64());
    const RealMatrix cost = quant_cost(op.apply(x));
    long double trial = 0;
    for (std::size_t r = 0; r < cost.rows(); ++r)
      for (std::size_t i : subset) trial += cost(r, i);
    sum += trial;
  }
  const double m = static_cast<double>(subset.size());
  const double d = static_cast<double>(x.cols());
  return {static_cast<double>(sum / static_cast<long double>(trials)), (m / d) * total};
}

}  // namespace spikedrive
