#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "spikedrive/spikedrive.hpp"

using namespace spikedrive;

namespace {

// Sylvester construction, normalized.
RealMatrix sylvester(std::size_t d) {
  RealMatrix h(1, 1, {1.0});
  while (h.rows() < d) {
    const std::size_t n = h.rows();
    RealMatrix next(2 * n, 2 * n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        next(r, c) = next(r, c + n) = next(r + n, c) = h(r, c);
        next(r + n, c + n) = -h(r, c);
      }
    h = next;
  }
  for (auto& v : h.values()) v /= std::sqrt(static_cast<double>(d));
  return h;
}

double row_norm(const RealMatrix& x, std::size_t r) {
  double s = 0;
  for (double v : x.row_span(r)) s += v * v;
  return std::sqrt(s);
}

double max_abs_diff(const RealMatrix& a, const RealMatrix& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Fwht, TwoPoint) {
  const RealMatrix y = fwht(RealMatrix::row({1, 1}));
  EXPECT_NEAR(y[0], std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(y[1], 0.0, 1e-15);
}

TEST(Fwht, ImpulseSpreadsUniformly) {
  EXPECT_EQ(fwht(RealMatrix::row({1, 0, 0, 0})).data(), (std::vector<double>{0.5, 0.5, 0.5, 0.5}));
}

TEST(Fwht, MatchesSylvesterMatrix) {
  const RealMatrix x = random_normal(1, 8, 17);
  EXPECT_LT(max_abs_diff(fwht(x), matmul(x, sylvester(8))), 1e-12);
}

TEST(Fwht, InvolutionAndIsometry) {
  const RealMatrix x = random_normal(5, 64, 2);
  const RealMatrix y = fwht(x);
  EXPECT_LT(max_abs_diff(fwht(y), x), 1e-12);
  for (std::size_t r = 0; r < x.rows(); ++r) EXPECT_NEAR(row_norm(y, r) / row_norm(x, r), 1.0, 1e-10);
}

TEST(Fwht, RejectsNonPowerOfTwo) {
  try {
    fwht(RealMatrix(1, 6));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotPowerOfTwo);
  }
  EXPECT_THROW(sample_orthogonal(12, RotationKind::HadamardRandomSign, 0), Error);
}

TEST(Orthogonal, HaarDimOneIsSign) {
  for (std::uint64_t s = 0; s < 8; ++s) {
    const double q = OrthogonalOp::haar(1, s).materialize()[0];
    EXPECT_DOUBLE_EQ(std::abs(q), 1.0);
  }
}

TEST(Orthogonal, EveryKindPreservesNorms) {
  const RealMatrix x = random_normal(4, 32, 77);
  for (RotationKind k : {RotationKind::HadamardPlain, RotationKind::HadamardRandomSign, RotationKind::HaarQR}) {
    const OrthogonalOp op = sample_orthogonal(32, k, 3);
    const RealMatrix y = op.apply(x);
    for (std::size_t r = 0; r < x.rows(); ++r) EXPECT_NEAR(row_norm(y, r), row_norm(x, r), 1e-10) << to_string(k);
    EXPECT_LT(max_abs_diff(op.apply_transpose(y), x), 1e-10) << to_string(k);
    const RealMatrix q = op.materialize();
    const RealMatrix qqt = matmul(q, q.transposed());
    for (std::size_t i = 0; i < 32; ++i)
      for (std::size_t j = 0; j < 32; ++j) EXPECT_NEAR(qqt(i, j), i == j ? 1.0 : 0.0, 1e-10);
  }
}

TEST(Orthogonal, DeterministicPerSeed) {
  EXPECT_EQ(OrthogonalOp::haar(8, 4).materialize(), OrthogonalOp::haar(8, 4).materialize());
  EXPECT_EQ(OrthogonalOp::hadamard_random_sign(8, 4).materialize(),
            OrthogonalOp::hadamard_random_sign(8, 4).materialize());
  EXPECT_FALSE(OrthogonalOp::haar(8, 4).materialize() == OrthogonalOp::haar(8, 5).materialize());
}

TEST(Orthogonal, HaarEntriesHaveZeroMean) {
  // Each entry of a Haar matrix has mean 0 and variance 1/d.
  constexpr std::size_t d = 16, seeds = 1000;
  std::vector<double> sum(d * d, 0.0);
  for (std::size_t s = 0; s < seeds; ++s) {
    const RealMatrix q = OrthogonalOp::haar(d, s).materialize();
    for (std::size_t i = 0; i < q.size(); ++i) sum[i] += q[i];
  }
  const double sigma = std::sqrt(1.0 / d / seeds);
  std::size_t outside = 0;
  for (double s : sum) outside += std::abs(s / seeds) > 3 * sigma ? 1 : 0;
  // 256 entries at 3 sigma: a handful of excursions is expected, a systematic bias is not.
  EXPECT_LE(outside, 6u);
}

TEST(GammaSqp, IdentityCase) {
  const RealMatrix u = random_normal(3, 1, 1);
  EXPECT_EQ(gamma_sqp_transform(u, GammaVector::ones(1), OrthogonalOp::hadamard(1)), u);
}

TEST(GammaSqp, OneHotRow) {
  const RealMatrix u = RealMatrix::row({0, 0, 1, 0});
  const RealMatrix y = gamma_sqp_transform(u, GammaVector({1, 1, 2, 1}), OrthogonalOp::hadamard(4));
  const RealMatrix h = sylvester(4);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(y[c], 2 * h(2, c), 1e-15);
  EXPECT_NEAR(row_norm(y, 0), 2.0, 1e-15);
}

TEST(GammaSqp, MatchesDenseReference) {
  const RealMatrix u = random_normal(6, 16, 5);
  Rng rng(6);
  std::vector<double> g(16);
  for (double& v : g) v = rng.uniform(0.25, 4.0);
  const GammaVector gamma(g);
  const OrthogonalOp op = OrthogonalOp::hadamard_random_sign(16, 7);
  RealMatrix diag(16, 16);
  for (std::size_t i = 0; i < 16; ++i) diag(i, i) = g[i];
  const RealMatrix ref = matmul(matmul(u, diag), op.materialize());
  EXPECT_LT(max_abs_diff(gamma_sqp_transform(u, gamma, op), ref), 1e-12);
  const double before = frobenius_sq(scale_columns(u, gamma));
  EXPECT_NEAR(frobenius_sq(gamma_sqp_transform(u, gamma, op)) / before, 1.0, 1e-10);
}

TEST(GammaSqp, DimMismatch) {
  EXPECT_THROW(gamma_sqp_transform(RealMatrix(1, 4), GammaVector::ones(8), OrthogonalOp::hadamard(4)), Error);
  EXPECT_THROW(GammaVector({1.0, 0.0}), Error);
}

TEST(QuarotFuse, IdentityLeavesWeight) {
  const RealMatrix w = random_normal(1, 5, 3);
  EXPECT_EQ(quarot_fuse_weights(w, GammaVector::ones(5), OrthogonalOp::hadamard(1)), w);
}

TEST(QuarotFuse, ScalesColumns) {
  const RealMatrix w = random_normal(1, 3, 4);
  const RealMatrix f = quarot_fuse_weights(w, GammaVector({2, 1, 1}), OrthogonalOp::hadamard(1));
  EXPECT_DOUBLE_EQ(f[0], 2 * w[0]);
  EXPECT_DOUBLE_EQ(f[1], w[1]);
}

TEST(QuarotFuse, ComputationalInvariance) {
  const RealMatrix u = random_normal(8, 16, 10);
  const RealMatrix w = random_normal(16, 12, 11);
  Rng rng(12);
  std::vector<double> g(12);
  for (double& v : g) v = rng.uniform(0.5, 2.0);
  const GammaVector gamma(g);
  for (RotationKind k : {RotationKind::HadamardRandomSign, RotationKind::HaarQR}) {
    const OrthogonalOp op = sample_orthogonal(16, k, 13);
    const RealMatrix fused = matmul(op.apply(u), quarot_fuse_weights(w, gamma, op));
    const RealMatrix direct = scale_columns(matmul(u, w), gamma);
    EXPECT_LT(std::sqrt(mean_squared_error(fused, direct) / (frobenius_sq(direct) / direct.size())), 1e-8);
  }
}

TEST(Dispersion, FullSubsetIsExact) {
  const RealMatrix x = random_normal(2, 16, 1);
  std::vector<std::size_t> all(16);
  std::iota(all.begin(), all.end(), 0);
  const auto r = dispersion_estimate(x, all, RotationKind::HaarQR, 20, 2);
  EXPECT_NEAR(r.measured / r.predicted, 1.0, 1e-12);
}

TEST(Dispersion, EmptySubsetRejected) {
  try {
    dispersion_estimate(RealMatrix(1, 4), {}, RotationKind::HaarQR, 1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySubset);
  }
}

TEST(Dispersion, HaarConvergesToClosedForm) {
  const RealMatrix x = random_normal(1, 64, 21);
  std::vector<std::size_t> subset(8);
  std::iota(subset.begin(), subset.end(), 0);
  const auto r = dispersion_estimate(x, subset, RotationKind::HaarQR, 2000, 22);
  EXPECT_LT(r.relative_error(), 0.05);
}

TEST(OrderingSeparation, ScaleThenRotateBeatsUnrotated) {
  // One channel scaled x50 dominates the per-tensor range; rotation spreads it.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RealMatrix x = random_normal(32, 64, seed);
    std::vector<double> g(64, 1.0);
    g[seed % 64] = 50.0;
    const GammaVector gamma(g);
    const RealMatrix rotated = gamma_sqp_transform(x, gamma, OrthogonalOp::hadamard(64));
    const RealMatrix plain = scale_columns(x, gamma);
    EXPECT_LT(quant_error(rotated, 4, QuantScheme::Symmetric), quant_error(plain, 4, QuantScheme::Symmetric))
        << "seed " << seed;
  }
}
