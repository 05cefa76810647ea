#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "codec.hpp"
#include "cost.hpp"
#include "error.hpp"
#include "kernel.hpp"
#include "matrix.hpp"
#include "quant.hpp"
#include "rng.hpp"
#include "rotation.hpp"
#include "sparsity.hpp"

namespace spikedrive::pipeline {

enum class Mode : std::uint8_t { FP, IntQuant, SpikeAsymBinary, SpikeSymTernary, SpikeClipped };
enum class Schedule : std::uint8_t { Synchronous, Asynchronous };
enum class OperatorGroup : std::uint8_t { QKV, QKVAttention, All };

/// How quantized matmuls are evaluated. Real skips quantization entirely but keeps the plan's
/// rotation wiring, which is what the fusion equivalence check runs through.
enum class Engine : std::uint8_t { Real, DenseInt, Spike };

inline std::string_view to_string(Mode m) noexcept {
  switch (m) {
    case Mode::FP: return "fp";
    case Mode::IntQuant: return "int";
    case Mode::SpikeAsymBinary: return "spike-asym";
    case Mode::SpikeSymTernary: return "spike-sym";
    case Mode::SpikeClipped: return "spike-clip";
  }
  return "?";
}

inline std::string_view to_string(Schedule s) noexcept { return s == Schedule::Synchronous ? "sync" : "async"; }

inline std::string_view to_string(OperatorGroup g) noexcept {
  switch (g) {
    case OperatorGroup::QKV: return "qkv";
    case OperatorGroup::QKVAttention: return "qkv+att";
    case OperatorGroup::All: return "all";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  for (Mode m : {Mode::FP, Mode::IntQuant, Mode::SpikeAsymBinary, Mode::SpikeSymTernary, Mode::SpikeClipped})
    if (to_string(m) == s) return m;
  fail(ErrorCode::ConfigError, "unknown mode '" + std::string(s) + "'");
}

inline Schedule parse_schedule(std::string_view s) {
  if (s == "sync") return Schedule::Synchronous;
  if (s == "async") return Schedule::Asynchronous;
  fail(ErrorCode::ConfigError, "unknown schedule '" + std::string(s) + "'");
}

inline OperatorGroup parse_group(std::string_view s) {
  for (OperatorGroup g : {OperatorGroup::QKV, OperatorGroup::QKVAttention, OperatorGroup::All})
    if (to_string(g) == s) return g;
  fail(ErrorCode::ConfigError, "unknown operator group '" + std::string(s) + "'");
}

enum class LinearOp : std::uint8_t { Q, K, V, O, Gate, Up, Down };
inline constexpr std::size_t kLinearOpCount = 7;
inline constexpr std::array<std::string_view, kLinearOpCount> kLinearOpNames = {
    "q_proj", "k_proj", "v_proj", "o_proj", "gate_proj", "up_proj", "down_proj"};
inline constexpr std::array<std::string_view, 2> kCacheNames = {"k_cache", "v_cache"};

inline std::string_view to_string(LinearOp op) noexcept { return kLinearOpNames[static_cast<std::size_t>(op)]; }

/// Operators that take encoded activations under a given group.
inline bool in_group(LinearOp op, OperatorGroup g) noexcept {
  if (g == OperatorGroup::All) return true;
  return op == LinearOp::Q || op == LinearOp::K || op == LinearOp::V;
}

inline bool attention_in_group(OperatorGroup g) noexcept { return g != OperatorGroup::QKV; }

struct BlockConfig {
  std::size_t d_h = 64;
  std::size_t d_i = 128;
  std::size_t n_blocks = 1;
  std::uint64_t seed = 0;
  int w_bits = 4;
  RotationKind rotation = RotationKind::HadamardRandomSign;

  void validate() const {
    require(is_power_of_two(d_h) && is_power_of_two(d_i), ErrorCode::NotPowerOfTwo, "block dims must be powers of two");
    require(d_i > d_h, ErrorCode::InvalidArgument, "d_i must exceed d_h");
    require(n_blocks >= 1, ErrorCode::InvalidArgument, "need at least one block");
    require(w_bits >= 2 && w_bits <= 16, ErrorCode::InvalidArgument, "weight bits outside [2, 16]");
  }

  friend bool operator==(const BlockConfig&, const BlockConfig&) = default;
};

/// One projection with both weight layouts: W as sampled and Q^T W for rotated inputs.
struct LinearWeights {
  RealMatrix w;
  RealMatrix w_rot;
  Quantized q;
  Quantized q_rot;
};

struct BlockWeights {
  GammaVector gamma_attn;
  GammaVector gamma_ffn;
  std::array<LinearWeights, kLinearOpCount> linear;
  OrthogonalOp rot_h;
  OrthogonalOp rot_i;

  const LinearWeights& operator[](LinearOp op) const { return linear[static_cast<std::size_t>(op)]; }
};

struct Block {
  BlockConfig cfg;
  std::vector<BlockWeights> blocks;
};

/// Gaussian weights whose input rows carry log-uniform scales in [1, 32], normalized so a
/// unit-RMS input gives a unit-RMS output.
inline RealMatrix heavy_tailed_weight(std::size_t in, std::size_t out, Rng& rng) {
  std::vector<double> scale(in);
  long double ms = 0;
  for (double& s : scale) {
    s = std::exp(rng.uniform(0.0, std::log(32.0)));
    ms += static_cast<long double>(s) * s;
  }
  const double norm = 1.0 / std::sqrt(static_cast<double>(ms));
  RealMatrix w(in, out);
  for (std::size_t i = 0; i < in; ++i)
    for (std::size_t j = 0; j < out; ++j) w(i, j) = rng.normal() * scale[i] * norm;
  return w;
}

inline Block build_block(const BlockConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Block block{cfg, {}};
  for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
    BlockWeights bw;
    auto sample_gamma = [&] {
      std::vector<double> g(cfg.d_h);
      for (double& v : g) v = std::exp(rng.uniform(std::log(0.25), std::log(4.0)));
      return GammaVector(std::move(g));
    };
    bw.gamma_attn = sample_gamma();
    bw.gamma_ffn = sample_gamma();
    bw.rot_h = sample_orthogonal(cfg.d_h, cfg.rotation, rng.next_u64());
    bw.rot_i = sample_orthogonal(cfg.d_i, cfg.rotation, rng.next_u64());
    for (std::size_t k = 0; k < kLinearOpCount; ++k) {
      const auto op = static_cast<LinearOp>(k);
      const bool up_shape = op == LinearOp::Gate || op == LinearOp::Up;
      const std::size_t in = op == LinearOp::Down ? cfg.d_i : cfg.d_h;
      const std::size_t out = up_shape ? cfg.d_i : cfg.d_h;
      LinearWeights& lw = bw.linear[k];
      lw.w = heavy_tailed_weight(in, out, rng);
      lw.w_rot = (op == LinearOp::Down ? bw.rot_i : bw.rot_h).rotate_weight_rows(lw.w);
      lw.q = quantize(lw.w, cfg.w_bits, QuantScheme::Symmetric);
      lw.q_rot = quantize(lw.w_rot, cfg.w_bits, QuantScheme::Symmetric);
    }
    block.blocks.push_back(std::move(bw));
  }
  return block;
}

/// Seeded activations with a few outlier channels (scaled x16), the shape rotation targets.
inline RealMatrix make_input(std::size_t rows, std::size_t d_h, std::uint64_t seed) {
  Rng rng(seed);
  RealMatrix x = random_normal(rows, d_h, rng);
  const std::size_t outliers = std::max<std::size_t>(1, d_h / 16);
  for (std::size_t k = 0; k < outliers; ++k) {
    const std::size_t c = rng.below(d_h);
    for (std::size_t r = 0; r < rows; ++r) x(r, c) *= 16.0;
  }
  return x;
}

using ClipTable = std::map<std::string, ClipState>;

struct ExecPlan {
  Mode mode = Mode::FP;
  int a_bits = 4;
  double clip_q = 0.5;
  double clip_alpha = kDefaultClipAlpha;
  OperatorGroup group = OperatorGroup::All;
  /// Encoding per operator name (linear op or "k_cache" / "v_cache").
  std::map<std::string, EncodingConfig> overrides;
  Schedule schedule = Schedule::Synchronous;
  std::uint64_t schedule_seed = 0;
  unsigned threads = 1;
  /// Clip thresholds keyed "b<i>.<op>". Inference-mode entries are used as-is; missing or
  /// calibrate-mode entries take one EMA step on the current input.
  ClipTable clip;

  bool rotates() const noexcept {
    return mode == Mode::SpikeAsymBinary || mode == Mode::SpikeSymTernary || mode == Mode::SpikeClipped;
  }
  bool clips() const noexcept { return mode == Mode::SpikeClipped; }

  EncodingScheme default_scheme() const noexcept {
    return mode == Mode::SpikeSymTernary ? EncodingScheme::SymTernary : EncodingScheme::AsymBinary;
  }

  EncodingConfig encoding_for(std::string_view name) const {
    const auto it = overrides.find(std::string(name));
    EncodingConfig e = it != overrides.end() ? it->second : EncodingConfig{a_bits, default_scheme(), 1};
    require(e.T == 1, ErrorCode::InvalidArgument, "the block harness runs one outer step");
    require(!(clips() && e.scheme == EncodingScheme::SymTernary), ErrorCode::InvalidArgument,
            "clipped activations are non-negative; '" + std::string(name) + "' must use asym encoding");
    e.d_steps();  // validates bits for the scheme
    return e;
  }

  void validate() const {
    require(a_bits >= 2 && a_bits <= 16, ErrorCode::InvalidArgument, "activation bits outside [2, 16]");
    if (clips()) ClipState::make(clip_q, clip_alpha);
    for (const auto& [name, e] : overrides) {
      bool known = false;
      for (auto n : kLinearOpNames) known = known || n == name;
      for (auto n : kCacheNames) known = known || n == name;
      require(known, ErrorCode::ConfigError, "encoding override for unknown operator '" + name + "'");
      encoding_for(name);
    }
  }

  Engine default_engine() const noexcept {
    if (mode == Mode::FP) return Engine::Real;
    return mode == Mode::IntQuant ? Engine::DenseInt : Engine::Spike;
  }
};

struct LayerFidelity {
  std::string name;
  double cosine = 1.0;
  double mse = 0.0;
  std::optional<FiringStats> firing;
  std::uint64_t events = 0;
};

struct FidelityReport {
  std::vector<LayerFidelity> layers;
  double end_to_end_cosine = 1.0;
  double end_to_end_mse = 0.0;
  std::uint64_t events = 0;        // spike events applied, all operators
  std::uint64_t linear_events = 0;  // spike counts |k| summed over linear-op inputs
  std::uint64_t linear_slots = 0;   // elements x D over linear-op inputs

  /// Firing rate pooled over every encoded linear-op input.
  std::optional<double> linear_rate() const {
    if (linear_slots == 0) return std::nullopt;
    return static_cast<double>(linear_events) / static_cast<double>(linear_slots);
  }

  const LayerFidelity* find(const std::string& name) const {
    for (const auto& l : layers)
      if (l.name == name) return &l;
    return nullptr;
  }
};

struct ForwardResult {
  RealMatrix y;
  FidelityReport report;
  ClipTable clip;  // thresholds after this run
};

/// Per-output-row bookkeeping of the event-queue schedule.
struct AsyncTrace {
  std::uint64_t processed = 0;
  std::size_t rows_completed = 0;
  std::size_t rows_with_events = 0;
};

/// Event-queue evaluation of fold(train) * W: every (slot, index, sign) event is dequeued in a
/// seeded random order and applied as one column-add. A row completes when its last pending
/// event lands.
inline IntMatrix async_spike_matmul(const IntMatrix& w, const SpikeTrain& train, std::uint64_t seed,
                                    KernelStats* stats = nullptr, AsyncTrace* trace = nullptr) {
  require(train.cols == w.rows(), ErrorCode::DimMismatch, "train width must equal weight rows");
  struct Event {
    std::uint32_t slot;
    std::uint64_t index;
    std::int8_t sign;
  };
  std::vector<Event> queue;
  queue.reserve(event_count(train));
  for (std::size_t slot = 0; slot < train.steps.size(); ++slot) {
    const SpikeStep& s = train.steps[slot];
    for (std::size_t e = 0; e < s.size(); ++e)
      queue.push_back({static_cast<std::uint32_t>(slot), s.index[e],
                       train.polarity == Polarity::Ternary ? s.sign[e] : std::int8_t{1}});
  }
  Rng rng(seed);
  rng.shuffle(queue.begin(), queue.end());

  const std::size_t n = train.cols;
  const std::size_t m = w.cols();
  const std::size_t out_rows = train.rows * train.T;
  std::vector<std::uint64_t> pending(out_rows, 0);
  for (const Event& ev : queue) ++pending[(ev.slot / train.d_steps) * train.rows + ev.index / n];
  AsyncTrace local;
  for (std::uint64_t p : pending) local.rows_with_events += p > 0 ? 1 : 0;

  IntMatrix acc(out_rows, m);
  for (const Event& ev : queue) {
    const std::size_t row = (ev.slot / train.d_steps) * train.rows + ev.index / n;
    const auto src = w.row_span(ev.index % n);
    auto dst = acc.row_span(row);
    if (ev.sign < 0)
      for (std::size_t j = 0; j < m; ++j) detail::checked_sub(dst[j], src[j]);
    else
      for (std::size_t j = 0; j < m; ++j) detail::checked_add(dst[j], src[j]);
    ++local.processed;
    if (--pending[row] == 0) ++local.rows_completed;
  }
  require(local.rows_completed == local.rows_with_events, ErrorCode::InvalidArgument,
          "event queue drained with rows still pending");
  if (stats) stats->column_adds += local.processed;
  if (trace) *trace = local;
  return acc;
}

namespace detail {

inline RealMatrix rms_norm(const RealMatrix& x, const GammaVector& gamma) {
  constexpr double eps = 1e-6;
  RealMatrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    long double ss = 0;
    for (double v : x.row_span(r)) ss += static_cast<long double>(v) * v;
    const double inv = 1.0 / std::sqrt(static_cast<double>(ss / x.cols()) + eps);
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(r, c) * inv * gamma[c];
  }
  return out;
}

inline double silu(double v) noexcept { return v / (1.0 + std::exp(-v)); }

inline void causal_softmax(RealMatrix& s) {
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c <= r && c < s.cols(); ++c) mx = std::max(mx, s(r, c));
    long double z = 0;
    for (std::size_t c = 0; c < s.cols(); ++c) {
      s(r, c) = c <= r ? std::exp(s(r, c) - mx) : 0.0;
      z += s(r, c);
    }
    for (std::size_t c = 0; c < s.cols(); ++c) s(r, c) = static_cast<double>(s(r, c) / z);
  }
}

inline RealMatrix add(const RealMatrix& a, const RealMatrix& b) {
  RealMatrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

class Runner {
 public:
  Runner(const Block& block, const ExecPlan& plan, Engine engine) : block_(block), plan_(plan), engine_(engine) {
    clip_ = plan.clip;
  }

  RealMatrix run(const RealMatrix& x) {
    require(x.cols() == block_.cfg.d_h, ErrorCode::ShapeMismatch,
            "input width " + std::to_string(x.cols()) + " != d_h " + std::to_string(block_.cfg.d_h));
    RealMatrix h = x;
    for (std::size_t b = 0; b < block_.blocks.size(); ++b) h = run_block(b, h);
    return h;
  }

  std::map<std::string, RealMatrix> outputs;
  std::vector<LayerFidelity> layers;
  std::uint64_t events = 0, linear_events = 0, linear_slots = 0;
  ClipTable clip_;

 private:
  bool quantized() const noexcept { return engine_ != Engine::Real; }

  void record(const std::string& name, const RealMatrix& y, std::optional<FiringStats> firing, std::uint64_t ev) {
    outputs[name] = y;
    layers.push_back({name, 1.0, 0.0, std::move(firing), ev});
  }

  /// Integer product of encoded activations and an integer operand, through the chosen engine.
  IntMatrix product(const SpikeCountMatrix& counts, const IntMatrix& w, std::vector<std::int64_t>& a_rows,
                    std::uint64_t& ev) {
    if (engine_ == Engine::DenseInt) {
      a_rows = row_sums(counts.counts);
      return dense_matmul_reference<std::int64_t>(counts.counts, w);
    }
    const SpikeTrain train = unfold(counts);
    a_rows = spike_row_sums(train);
    KernelStats stats;
    IntMatrix acc;
    if (plan_.schedule == Schedule::Asynchronous)
      acc = async_spike_matmul(w, train, plan_.schedule_seed ^ (0x9E3779B97F4A7C15ULL * ++calls_), &stats);
    else
      acc = spike_matmul<std::int64_t>(w, train, &stats, KernelOptions{{}, plan_.threads});
    ev = stats.column_adds;
    events += ev;
    return acc;
  }

  RealMatrix linear(std::size_t b, LinearOp op, const RealMatrix& a) {
    const BlockWeights& bw = block_.blocks[b];
    const LinearWeights& lw = bw[op];
    const OrthogonalOp& rot = op == LinearOp::Down ? bw.rot_i : bw.rot_h;
    const std::string name = "b" + std::to_string(b) + "." + std::string(to_string(op));
    const bool encoded = plan_.mode != Mode::FP && in_group(op, plan_.group);

    if (!encoded || !quantized()) {
      const bool rotate = encoded && plan_.rotates();
      RealMatrix y = rotate ? matmul(rot.apply(a), lw.w_rot) : matmul(a, lw.w);
      record(name, y, std::nullopt, 0);
      return y;
    }

    RealMatrix u = plan_.rotates() ? rot.apply(a) : a;
    if (plan_.clips()) u = qsrelu(u, clip_threshold(name, u));
    const Quantized& wq = plan_.rotates() ? lw.q_rot : lw.q;
    const SpikeCountMatrix counts = encode_counts(u, plan_.encoding_for(to_string(op)));
    std::vector<std::int64_t> a_rows;
    std::uint64_t ev = 0;
    const IntMatrix acc = product(counts, wq.values, a_rows, ev);
    RealMatrix y = dequantize_product(acc, counts.params, a_rows, wq.params, col_sums(wq.values), a.cols());
    FiringStats fs = firing_stats(counts);
    linear_events += static_cast<std::uint64_t>(std::llround(fs.mean_count * static_cast<double>(fs.samples)));
    linear_slots += fs.samples * fs.d_steps;
    record(name, y, std::move(fs), ev);
    return y;
  }

  double clip_threshold(const std::string& name, const RealMatrix& u) {
    auto it = clip_.find(name);
    if (it != clip_.end() && it->second.mode == ClipMode::Inference) {
      require(it->second.calibrated, ErrorCode::NotCalibrated, "clip state for '" + name + "' is not calibrated");
      return it->second.tau;
    }
    const ClipState start = it != clip_.end() ? it->second : ClipState::make(plan_.clip_q, plan_.clip_alpha);
    const ClipState next = calibrate_step(start, u);
    clip_[name] = next;
    return next.tau;
  }

  RealMatrix attention(std::size_t b, const RealMatrix& xn) {
    const BlockWeights& bw = block_.blocks[b];
    const std::string prefix = "b" + std::to_string(b) + ".";
    const RealMatrix q = linear(b, LinearOp::Q, xn);
    const RealMatrix k = linear(b, LinearOp::K, xn);
    const RealMatrix v = linear(b, LinearOp::V, xn);
    const bool encoded = plan_.mode != Mode::FP && attention_in_group(plan_.group);
    const bool rotate = encoded && plan_.rotates();
    const RealMatrix qr = rotate ? bw.rot_h.apply(q) : q;
    const RealMatrix kr = rotate ? bw.rot_h.apply(k) : k;
    const RealMatrix vr = rotate ? bw.rot_h.apply(v) : v;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(block_.cfg.d_h));
    const std::size_t n = xn.rows();

    RealMatrix scores;
    std::optional<FiringStats> k_stats, v_stats;
    std::uint64_t k_ev = 0, v_ev = 0;
    if (encoded && quantized()) {
      // Keys are the spiked side; queries stay integer.
      const SpikeCountMatrix kc = encode_counts(kr, plan_.encoding_for("k_cache"));
      const Quantized qi = quantize(qr, plan_.a_bits, QuantScheme::Symmetric);
      const IntMatrix qt = qi.values.transposed();
      std::vector<std::int64_t> a_rows;
      const IntMatrix acc = product(kc, qt, a_rows, k_ev);
      scores = dequantize_product(acc, kc.params, a_rows, qi.params, col_sums(qt), block_.cfg.d_h).transposed();
      k_stats = firing_stats(kc);
    } else {
      scores = matmul(qr, kr.transposed());
    }
    for (double& s : scores.values()) s *= inv_sqrt_d;
    causal_softmax(scores);
    record(prefix + "scores", scores, k_stats, k_ev);

    RealMatrix ctx;
    if (encoded && quantized()) {
      // The value cache is spiked along its transposed layout, probabilities stay integer.
      const SpikeCountMatrix vc = encode_counts(vr.transposed(), plan_.encoding_for("v_cache"));
      const Quantized pi = quantize(scores, plan_.a_bits, QuantScheme::Asymmetric);
      const IntMatrix pt = pi.values.transposed();
      std::vector<std::int64_t> a_rows;
      const IntMatrix acc = product(vc, pt, a_rows, v_ev);
      ctx = dequantize_product(acc, vc.params, a_rows, pi.params, col_sums(pt), n).transposed();
      v_stats = firing_stats(vc);
    } else {
      ctx = matmul(scores, vr);
    }
    if (rotate) ctx = bw.rot_h.apply_transpose(ctx);
    record(prefix + "context", ctx, v_stats, v_ev);
    return linear(b, LinearOp::O, ctx);
  }

  RealMatrix run_block(std::size_t b, const RealMatrix& x) {
    const BlockWeights& bw = block_.blocks[b];
    const RealMatrix h = add(x, attention(b, rms_norm(x, bw.gamma_attn)));
    const RealMatrix xn = rms_norm(h, bw.gamma_ffn);
    const RealMatrix g = linear(b, LinearOp::Gate, xn);
    RealMatrix u = linear(b, LinearOp::Up, xn);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] *= silu(g[i]);
    const RealMatrix y = add(h, linear(b, LinearOp::Down, u));
    record("b" + std::to_string(b) + ".out", y, std::nullopt, 0);
    return y;
  }

  const Block& block_;
  const ExecPlan& plan_;
  Engine engine_;
  std::uint64_t calls_ = 0;
};

}  // namespace detail

/// Runs the block under `plan` with an explicit engine and scores every recorded layer
/// against the FP reference.
inline ForwardResult forward_with(const Block& block, const RealMatrix& x, const ExecPlan& plan, Engine engine) {
  plan.validate();
  require(plan.mode != Mode::FP || engine == Engine::Real, ErrorCode::InvalidArgument,
          "FP mode runs on the real engine");
  ExecPlan fp_plan;
  detail::Runner ref(block, fp_plan, Engine::Real);
  const RealMatrix y_ref = ref.run(x);

  detail::Runner run(block, plan, engine);
  ForwardResult out;
  out.y = run.run(x);
  out.clip = std::move(run.clip_);
  for (auto& l : run.layers) {
    const RealMatrix& a = run.outputs.at(l.name);
    const RealMatrix& r = ref.outputs.at(l.name);
    l.cosine = cosine_similarity(a, r);
    l.mse = mean_squared_error(a, r);
  }
  out.report.layers = std::move(run.layers);
  out.report.end_to_end_cosine = cosine_similarity(out.y, y_ref);
  out.report.end_to_end_mse = mean_squared_error(out.y, y_ref);
  out.report.events = run.events;
  out.report.linear_events = run.linear_events;
  out.report.linear_slots = run.linear_slots;
  return out;
}

inline ForwardResult forward(const Block& block, const RealMatrix& x, const ExecPlan& plan) {
  return forward_with(block, x, plan, plan.default_engine());
}

/// The plan's spike path under the event-queue schedule.
inline ForwardResult run_async(const Block& block, const RealMatrix& x, ExecPlan plan) {
  require(plan.default_engine() == Engine::Spike, ErrorCode::WrongMode, "asynchronous schedule needs a spike mode");
  plan.schedule = Schedule::Asynchronous;
  return forward(block, x, plan);
}

/// Freezes every calibrated threshold for inference.
inline ClipTable freeze(const ClipTable& table) {
  ClipTable out;
  for (const auto& [name, s] : table) out[name] = s.mode == ClipMode::Inference ? s : s.freeze();
  return out;
}

struct SweepRow {
  std::string label;
  ExecPlan plan;
  FidelityReport report;
};

inline std::vector<SweepRow> sweep(const Block& block, const RealMatrix& x,
                                   const std::vector<std::pair<std::string, ExecPlan>>& plans) {
  std::vector<SweepRow> rows;
  for (const auto& [label, plan] : plans) rows.push_back({label, plan, forward(block, x, plan).report});
  return rows;
}

/// FNV-1a over the raw bytes of every element: equal digests mean bit-identical outputs.
inline std::uint64_t output_digest(const RealMatrix& y) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : y.values()) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char c : bytes) h = (h ^ c) * 0x100000001b3ULL;
  }
  return h;
}

inline void write_report(std::ostream& os, const FidelityReport& r) {
  using cost::format_number;
  for (const auto& l : r.layers) {
    os << "layer=" << l.name << " cosine=" << format_number(l.cosine) << " mse=" << format_number(l.mse);
    if (l.firing)
      os << " R=" << format_number(l.firing->rate) << " mean_k=" << format_number(l.firing->mean_count)
         << " D=" << l.firing->d_steps;
    os << " events=" << l.events << '\n';
  }
  os << "end_to_end cosine=" << format_number(r.end_to_end_cosine) << " mse=" << format_number(r.end_to_end_mse)
     << " events=" << r.events;
  if (auto rate = r.linear_rate()) os << " linear_R=" << format_number(*rate);
  os << '\n';
}

/// One `hist` record per (layer, count) with its empirical probability.
inline void write_histograms(std::ostream& os, const FidelityReport& r) {
  for (const auto& l : r.layers) {
    if (!l.firing) continue;
    for (const auto& [k, p] : l.firing->histogram)
      os << "hist layer=" << l.name << " k=" << k << " p=" << cost::format_number(p) << '\n';
  }
}

}  // namespace spikedrive::pipeline
