#include <gtest/gtest.h>

#include <limits>
#include <numeric>

#include "spikedrive/spikedrive.hpp"
#include "support.hpp"

using namespace spikedrive;
using spikedrive::testing::random_counts;
using spikedrive::testing::random_ints;

TEST(Spmv, BinarySelectsColumns) {
  const IntMatrix w(2, 2, {1, 2, 3, 4});
  const std::vector<std::int64_t> x = {1, 0};
  EXPECT_EQ(spmv_binary(w, std::span<const std::int64_t>(x)), (std::vector<std::int64_t>{1, 3}));
}

TEST(Spmv, ZeroInputDoesNoWork) {
  const IntMatrix w(2, 2, {1, 2, 3, 4});
  const std::vector<std::int64_t> x = {0, 0};
  KernelStats stats;
  EXPECT_EQ(spmv_binary(w, std::span<const std::int64_t>(x), &stats), (std::vector<std::int64_t>{0, 0}));
  EXPECT_EQ(stats.column_adds, 0u);
}

TEST(Spmv, TernarySubtractsNegativeColumns) {
  const IntMatrix w(2, 2, {1, 2, 3, 4});
  const std::vector<std::int64_t> x = {1, -1};
  EXPECT_EQ(spmv_ternary(w, std::span<const std::int64_t>(x)), (std::vector<std::int64_t>{-1, -1}));
}

TEST(Spmv, RejectsWrongAlphabet) {
  const IntMatrix w(2, 2, {1, 2, 3, 4});
  const std::vector<std::int64_t> x = {2, 0};
  EXPECT_THROW(spmv_binary(w, std::span<const std::int64_t>(x)), Error);
  EXPECT_THROW(spmv_ternary(w, std::span<const std::int64_t>(x)), Error);
  const std::vector<std::int64_t> short_x = {1};
  EXPECT_THROW(spmv_binary(w, std::span<const std::int64_t>(short_x)), Error);
}

TEST(Spmv, MatchesDenseReference) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const IntMatrix w = random_ints(64, 64, -128, 127, rng);
    const IntMatrix xb = random_ints(64, 1, 0, 1, rng);
    const IntMatrix xt = random_ints(64, 1, -1, 1, rng);
    EXPECT_EQ(spmv_binary(w, xb.values()), dense_matmul_reference(w, xb).data());
    const auto yt = spmv_ternary(w, xt.values());
    EXPECT_EQ(yt, dense_matmul_reference(w, xt).data());
    IntMatrix neg = xt;
    for (auto& v : neg.values()) v = -v;
    const auto yn = spmv_ternary(w, neg.values());
    for (std::size_t i = 0; i < yt.size(); ++i) EXPECT_EQ(yn[i], -yt[i]);
  }
}

TEST(Spmv, RealModeWithinTolerance) {
  const RealMatrix w = random_normal(32, 32, 5);
  Rng rng(6);
  const IntMatrix x = random_ints(32, 1, 0, 1, rng);
  const auto y = spmv_binary(w, x.values());
  const RealMatrix ref = matmul(w, to_real(x));
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-9 * (1 + std::abs(ref[i])));
}

TEST(DenseReference, IdentityAndScalar) {
  Rng rng(1);
  const IntMatrix a = random_ints(5, 5, -9, 9, rng);
  IntMatrix eye(5, 5);
  for (int i = 0; i < 5; ++i) eye(i, i) = 1;
  EXPECT_EQ(dense_matmul_reference(eye, a), a);
  EXPECT_EQ(dense_matmul_reference(IntMatrix(1, 1, {6}), IntMatrix(1, 1, {-7}))[0], -42);
  EXPECT_THROW(dense_matmul_reference(IntMatrix(2, 3), IntMatrix(2, 3)), Error);
}

TEST(DenseReference, AssociativitySpotCheck) {
  Rng rng(16);
  const IntMatrix a = random_ints(16, 16, -50, 50, rng);
  const IntMatrix b = random_ints(16, 16, -50, 50, rng);
  for (std::size_t j = 0; j < 16; ++j) {
    IntMatrix e(16, 1);
    e[j] = 1;
    EXPECT_EQ(dense_matmul_reference(dense_matmul_reference(a, b), e),
              dense_matmul_reference(a, dense_matmul_reference(b, e)));
  }
}

TEST(DenseReference, OverflowDetected) {
  const auto big = std::numeric_limits<std::int64_t>::max() / 2 + 1;
  try {
    dense_matmul_reference(IntMatrix(1, 2, {big, big}), IntMatrix(2, 1, {1, 1}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IntegerOverflow);
  }
}

TEST(SpikeMatmul, ZeroTrainGivesZero) {
  SpikeCountMatrix c;
  c.counts = IntMatrix(4, 8);
  c.polarity = Polarity::Binary;
  c.d_steps = 15;
  Rng rng(1);
  const IntMatrix w = random_ints(8, 3, -5, 5, rng);
  KernelStats stats;
  EXPECT_EQ(spike_matmul(w, unfold(c), &stats), IntMatrix(4, 3));
  EXPECT_EQ(stats.column_adds, 0u);
}

TEST(SpikeMatmul, OneHotCountsScaleRows) {
  SpikeCountMatrix c;
  c.counts = IntMatrix(2, 4);
  c.counts(0, 1) = 3;
  c.counts(1, 2) = -2;
  c.polarity = Polarity::Ternary;
  c.d_steps = 4;
  Rng rng(2);
  const IntMatrix w = random_ints(4, 5, -9, 9, rng);
  const IntMatrix y = spike_matmul(w, unfold(c));
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_EQ(y(0, j), 3 * w(1, j));
    EXPECT_EQ(y(1, j), -2 * w(2, j));
  }
}

TEST(SpikeMatmul, ExactOrderAndThreadInvariant) {
  Rng rng(128);
  const IntMatrix w = random_ints(128, 128, -128, 127, rng);
  const SpikeCountMatrix c = random_counts(128, 128, 4, EncodingScheme::SymTernary, rng);
  const SpikeTrain t = unfold(c);
  KernelStats stats;
  const IntMatrix y = spike_matmul(w, t, &stats);
  EXPECT_EQ(y, dense_matmul_reference(fold(t).counts, w));
  EXPECT_EQ(stats.column_adds, event_count(t));

  std::vector<std::size_t> order(t.steps.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  KernelStats shuffled_stats;
  EXPECT_EQ(spike_matmul(w, t, &shuffled_stats, {order, 1}), y);
  EXPECT_EQ(shuffled_stats.column_adds, stats.column_adds);
  for (unsigned threads : {2u, 3u, 8u}) {
    KernelStats threaded;
    EXPECT_EQ(spike_matmul(w, t, &threaded, {{}, threads}), y);
    EXPECT_EQ(threaded.column_adds, stats.column_adds);
  }
}

TEST(SpikeMatmul, RealWeightsMatchFoldedProduct) {
  Rng rng(3);
  const RealMatrix w = random_normal(32, 16, rng);
  const SpikeCountMatrix c = random_counts(8, 32, 3, EncodingScheme::AsymBinary, rng);
  const RealMatrix y = spike_matmul(w, unfold(c));
  const RealMatrix ref = matmul(to_real(c.counts), w);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-9 * (1 + std::abs(ref[i])));
}

TEST(SpikeMatmul, RejectsBadOrderAndShape) {
  Rng rng(4);
  const SpikeTrain t = unfold(random_counts(2, 4, 2, EncodingScheme::AsymBinary, rng));
  EXPECT_THROW(spike_matmul(IntMatrix(5, 2), t), Error);
  const std::vector<std::size_t> bad = {0, 0, 1};
  EXPECT_THROW(spike_matmul(IntMatrix(4, 2), t, nullptr, {bad, 1}), Error);
}

TEST(SpikeMatmul, MultiStepOutputsStack) {
  Rng rng(5);
  const std::vector<SpikeCountMatrix> parts = {random_counts(3, 6, 3, EncodingScheme::SymTernary, rng),
                                               random_counts(3, 6, 3, EncodingScheme::SymTernary, rng)};
  const SpikeCountMatrix c = stack_steps(parts);
  const IntMatrix w = random_ints(6, 4, -7, 7, rng);
  EXPECT_EQ(spike_matmul(w, unfold(c)), dense_matmul_reference(c.counts, w));
}

TEST(RowSums, SpikeSumsMatchFoldedCounts) {
  Rng rng(6);
  const SpikeCountMatrix c = random_counts(9, 7, 4, EncodingScheme::SymTernary, rng);
  EXPECT_EQ(spike_row_sums(unfold(c)), row_sums(c.counts));
}

TEST(DequantizeProduct, RecoversRealProduct) {
  // Y = (A_q - zA) dA (B_q - zB) dB, computed once from the integer accumulator.
  const RealMatrix a = random_normal(6, 16, 7);
  const RealMatrix b = random_normal(16, 5, 8);
  const auto [aq, ap] = quantize(a, 4, QuantScheme::Asymmetric);
  const auto [bq, bp] = quantize(b, 4, QuantScheme::Asymmetric);
  const IntMatrix acc = dense_matmul_reference(aq, bq);
  const RealMatrix y = dequantize_product(acc, ap, row_sums(aq), bp, col_sums(bq), 16);
  const RealMatrix ref = matmul(dequantize(aq, ap), dequantize(bq, bp));
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12 * (1 + std::abs(ref[i])));
}
