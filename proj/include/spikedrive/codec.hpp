#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"
#include "quant.hpp"

namespace spikedrive {

enum class Polarity : std::uint8_t { Binary = 0, Ternary = 1 };

/// Count encoding families. AsymBinary: counts in [0, 2^B - 1] unfolded over 2^B - 1 steps.
/// SymTernary: signed counts in [-2^(B-1), 2^(B-1) - 1] unfolded over 2^(B-1) steps.
enum class EncodingScheme : std::uint8_t { AsymBinary, SymTernary };

inline std::string_view to_string(EncodingScheme s) noexcept {
  return s == EncodingScheme::AsymBinary ? "asym" : "sym";
}

inline Polarity polarity_of(EncodingScheme s) noexcept {
  return s == EncodingScheme::AsymBinary ? Polarity::Binary : Polarity::Ternary;
}

inline std::uint32_t unfold_length(int bits, EncodingScheme scheme) {
  require(bits >= 1 && bits <= 16, ErrorCode::InvalidArgument, "bits outside [1, 16]");
  if (scheme == EncodingScheme::AsymBinary) return (std::uint32_t{1} << bits) - 1;
  require(bits >= 2, ErrorCode::InvalidArgument, "ternary encoding needs at least 2 bits");
  return std::uint32_t{1} << (bits - 1);
}

struct EncodingConfig {
  int bits = 4;
  EncodingScheme scheme = EncodingScheme::SymTernary;
  std::uint32_t T = 1;

  std::uint32_t d_steps() const { return unfold_length(bits, scheme); }
  Polarity polarity() const noexcept { return polarity_of(scheme); }
  QuantScheme quant_scheme() const noexcept {
    return scheme == EncodingScheme::AsymBinary ? QuantScheme::Asymmetric : QuantScheme::Symmetric;
  }

  friend bool operator==(const EncodingConfig&, const EncodingConfig&) = default;
};

/// Integer spike counts for T outer steps. `counts` stacks the steps: rows [t*rows, (t+1)*rows).
struct SpikeCountMatrix {
  IntMatrix counts;
  std::uint32_t T = 1;
  Polarity polarity = Polarity::Binary;
  std::uint32_t d_steps = 0;
  QuantParams params;

  std::size_t rows() const noexcept { return T == 0 ? 0 : counts.rows() / T; }
  std::size_t cols() const noexcept { return counts.cols(); }
};

/// One (t, d) slot of a spike train: flat indices (r * cols + c) in increasing order, plus a
/// parallel sign list for ternary trains.
struct SpikeStep {
  std::vector<std::uint64_t> index;
  std::vector<std::int8_t> sign;

  std::size_t size() const noexcept { return index.size(); }
  friend bool operator==(const SpikeStep&, const SpikeStep&) = default;
};

/// Temporally unfolded spikes, stored as sparse per-step event lists. Step (t, d) lives at
/// `steps[t * d_steps + d]`.
struct SpikeTrain {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::uint32_t T = 1;
  std::uint32_t d_steps = 0;
  Polarity polarity = Polarity::Binary;
  std::vector<SpikeStep> steps;

  std::size_t elements() const noexcept { return rows * cols; }
  const SpikeStep& step(std::uint32_t t, std::uint32_t d) const { return steps[std::size_t{t} * d_steps + d]; }

  friend bool operator==(const SpikeTrain&, const SpikeTrain&) = default;
};

/// Step one: membrane potentials (already rotated) to integer spike counts.
inline SpikeCountMatrix encode_counts(const RealMatrix& u_rot, const EncodingConfig& cfg) {
  require(cfg.T == 1, ErrorCode::InvalidArgument, "encode_counts produces one outer step; stack steps to build T > 1");
  auto [q, p] = quantize(u_rot, cfg.bits, cfg.quant_scheme());
  return {std::move(q), 1, cfg.polarity(), cfg.d_steps(), p};
}

/// Encodes against a grid chosen by the caller (shared calibration, aligned grids).
inline SpikeCountMatrix encode_counts_with(const RealMatrix& u_rot, const QuantParams& grid, Polarity polarity,
                                           std::uint32_t d_steps) {
  SpikeCountMatrix out{quantize_with(u_rot, grid), 1, polarity, d_steps, grid};
  return out;
}

inline void check_count_range(const SpikeCountMatrix& c) {
  const auto limit = static_cast<std::int64_t>(c.d_steps);
  for (std::int64_t k : c.counts.values()) {
    const bool ok = c.polarity == Polarity::Binary ? (k >= 0 && k <= limit) : (k >= -limit && k <= limit);
    require(ok, ErrorCode::CountOutOfRange,
            "count " + std::to_string(k) + " does not fit a window of " + std::to_string(c.d_steps));
  }
}

/// Step two: count k becomes sign(k) at steps 0 .. |k|-1 of its window, nothing after.
inline SpikeTrain unfold(const SpikeCountMatrix& counts) {
  require(counts.T >= 1 && counts.counts.rows() % counts.T == 0, ErrorCode::ShapeMismatch,
          "count rows not divisible by T");
  check_count_range(counts);
  SpikeTrain train;
  train.rows = counts.rows();
  train.cols = counts.cols();
  train.T = counts.T;
  train.d_steps = counts.d_steps;
  train.polarity = counts.polarity;
  train.steps.resize(std::size_t{counts.T} * counts.d_steps);

  const std::size_t per_step = train.elements();
  for (std::uint32_t t = 0; t < counts.T; ++t) {
    SpikeStep* window = train.steps.data() + std::size_t{t} * counts.d_steps;
    for (std::size_t i = 0; i < per_step; ++i) {
      const std::int64_t k = counts.counts[std::size_t{t} * per_step + i];
      const auto mag = static_cast<std::uint32_t>(k < 0 ? -k : k);
      const std::int8_t s = k < 0 ? -1 : 1;
      for (std::uint32_t d = 0; d < mag; ++d) {
        window[d].index.push_back(i);
        if (train.polarity == Polarity::Ternary) window[d].sign.push_back(s);
      }
    }
  }
  return train;
}

inline SpikeTrain unfold(const SpikeCountMatrix& counts, const EncodingConfig& cfg) {
  require(counts.d_steps == cfg.d_steps() && counts.polarity == cfg.polarity(), ErrorCode::InvalidArgument,
          "counts were not produced for this encoding config");
  return unfold(counts);
}

/// Signed sum over each window. The returned params are defaulted; callers that need the grid keep it.
inline SpikeCountMatrix fold(const SpikeTrain& train) {
  SpikeCountMatrix out;
  out.T = train.T;
  out.polarity = train.polarity;
  out.d_steps = train.d_steps;
  out.counts = IntMatrix(train.rows * train.T, train.cols);
  const std::size_t per_step = train.elements();
  for (std::uint32_t t = 0; t < train.T; ++t) {
    for (std::uint32_t d = 0; d < train.d_steps; ++d) {
      const SpikeStep& s = train.step(t, d);
      for (std::size_t e = 0; e < s.size(); ++e) {
        const std::int64_t v = train.polarity == Polarity::Ternary ? s.sign[e] : 1;
        out.counts[std::size_t{t} * per_step + s.index[e]] += v;
      }
    }
  }
  return out;
}

/// Stacks single-step count matrices into one T-step matrix. All inputs must share shape and encoding.
inline SpikeCountMatrix stack_steps(std::span<const SpikeCountMatrix> steps) {
  require(!steps.empty(), ErrorCode::EmptyInput, "no steps to stack");
  const SpikeCountMatrix& first = steps.front();
  SpikeCountMatrix out;
  out.T = 0;
  out.polarity = first.polarity;
  out.d_steps = first.d_steps;
  out.params = first.params;
  std::vector<std::int64_t> data;
  for (const auto& s : steps) {
    require(s.cols() == first.cols() && s.rows() == first.rows() && s.polarity == first.polarity &&
                s.d_steps == first.d_steps,
            ErrorCode::ShapeMismatch, "stacked steps disagree in shape or encoding");
    data.insert(data.end(), s.counts.values().begin(), s.counts.values().end());
    out.T += s.T;
  }
  out.counts = IntMatrix(first.rows() * out.T, first.cols(), std::move(data));
  return out;
}

/// Total non-zero spike events, polarity ignored.
inline std::uint64_t event_count(const SpikeTrain& train) noexcept {
  std::uint64_t n = 0;
  for (const auto& s : train.steps) n += s.size();
  return n;
}

struct FiringStats {
  std::map<std::int64_t, double> histogram;  // P_k
  double mean_count = 0.0;                    // mean |k|
  double rate = 0.0;                          // R
  std::uint32_t d_steps = 0;
  std::uint64_t samples = 0;
};

/// Accumulates count histograms across tensors that share one unfold length.
class FiringAccumulator {
 public:
  explicit FiringAccumulator(std::uint32_t d_steps) : d_steps_(d_steps) {
    require(d_steps > 0, ErrorCode::InvalidArgument, "unfold length must be positive");
  }

  void add(std::int64_t k, std::uint64_t times = 1) {
    counts_[k] += times;
    samples_ += times;
    abs_sum_ += static_cast<long double>(k < 0 ? -k : k) * times;
  }

  void add(const SpikeCountMatrix& c) {
    require(c.d_steps == d_steps_, ErrorCode::InvalidArgument, "unfold length differs from accumulator");
    for (std::int64_t k : c.counts.values()) add(k);
  }

  FiringStats stats() const {
    FiringStats s;
    s.d_steps = d_steps_;
    s.samples = samples_;
    if (samples_ == 0) return s;
    for (const auto& [k, n] : counts_) s.histogram[k] = static_cast<double>(n) / static_cast<double>(samples_);
    s.mean_count = static_cast<double>(abs_sum_ / samples_);
    s.rate = s.mean_count / d_steps_;
    return s;
  }

 private:
  std::uint32_t d_steps_;
  std::map<std::int64_t, std::uint64_t> counts_;
  std::uint64_t samples_ = 0;
  long double abs_sum_ = 0;
};

inline FiringStats firing_stats(const SpikeCountMatrix& counts) {
  FiringAccumulator acc(counts.d_steps);
  acc.add(counts);
  return acc.stats();
}

/// Statistics measured on the train itself: R is the density of non-zero slots.
inline FiringStats firing_stats(const SpikeTrain& train) {
  FiringStats s = firing_stats(fold(train));
  const double slots = static_cast<double>(train.elements()) * train.T * train.d_steps;
  s.rate = slots == 0 ? 0.0 : static_cast<double>(event_count(train)) / slots;
  return s;
}

/// Firing rate of an explicit count distribution: sum_k (|k| / D) P_k.
inline double rate_of_distribution(const std::map<std::int64_t, double>& p, std::uint32_t d_steps) {
  long double r = 0;
  for (const auto& [k, pk] : p) r += static_cast<long double>(k < 0 ? -k : k) / d_steps * pk;
  return static_cast<double>(r);
}

struct LIFParams {
  double threshold = 1.0;
  double beta = 1.0;
  double v_reset = 0.0;
};

struct LIFStep {
  IntMatrix spikes;
  RealMatrix next;
};

/// Leaky integrate-and-fire update. Fires where the integrated potential reaches the threshold.
inline LIFStep lif_step(const RealMatrix& u_prev, const RealMatrix& input, const LIFParams& p) {
  require(same_shape(u_prev, input), ErrorCode::ShapeMismatch, "membrane and input shapes differ");
  require(p.beta > 0 && p.beta <= 1, ErrorCode::InvalidArgument, "decay must lie in (0, 1]");
  LIFStep out{IntMatrix(input.rows(), input.cols()), RealMatrix(input.rows(), input.cols())};
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double u = u_prev[i] + input[i];
    const bool fire = u >= p.threshold;
    out.spikes[i] = fire ? 1 : 0;
    out.next[i] = fire ? p.v_reset : p.beta * u;
  }
  return out;
}

}  // namespace spikedrive
