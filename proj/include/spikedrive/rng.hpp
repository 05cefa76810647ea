#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "matrix.hpp"

namespace spikedrive {

/// The single randomness source for the library: std::mt19937_64 (bit-exact per the standard)
/// with hand-written transforms on top, so draws are identical on every standard library.
/// `<random>` distributions are deliberately not used: their outputs are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do { x = engine_(); } while (x >= limit);
    return x % n;
  }

  int sign() { return (engine_() >> 63) ? 1 : -1; }

  /// Standard normal via the Box-Muller transform; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do { u1 = uniform(); } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const std::uint64_t j = below(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline RealMatrix random_normal(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  RealMatrix out(rows, cols);
  for (auto& v : out.values()) v = scale * rng.normal();
  return out;
}

inline RealMatrix random_normal(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  return random_normal(rows, cols, rng, scale);
}

}  // namespace spikedrive
