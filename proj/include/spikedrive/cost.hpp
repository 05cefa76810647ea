#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"

namespace spikedrive::cost {

/// 45 nm, 32-bit energy per operation.
inline constexpr double kEnergyMacJoules = 4.6e-12;
inline constexpr double kEnergyAcJoules = 0.9e-12;

struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Fraction&, const Fraction&) = default;
};

/// Share of a 32-bit FLOP taken by one w-bit x a-bit multiply when both operands are split into
/// 2-bit lanes: ceil(w/2) * ceil(a/2) / 32. With `half_lane_binary`, a 1-bit operand fills half
/// a lane instead of a whole one.
inline Fraction decomposition_factor(int w_bits, int a_bits, bool half_lane_binary = false) {
  require(w_bits >= 1 && a_bits >= 1, ErrorCode::InvalidArgument, "bit widths must be positive");
  // Lanes counted in halves so the half-lane case stays integral.
  auto half_lanes = [&](int b) -> std::int64_t { return b == 1 && half_lane_binary ? 1 : 2 * ((b + 1) / 2); };
  Fraction f{half_lanes(w_bits) * half_lanes(a_bits), 4 * 32};
  const std::int64_t g = std::gcd(f.num, f.den);
  return {f.num / g, f.den / g};
}

enum class LayerRole : std::uint8_t { Linear, Attention };

inline std::string_view to_string(LayerRole r) noexcept { return r == LayerRole::Linear ? "linear" : "attention"; }

struct LayerShape {
  std::string name;
  double macs_fp = 0;  // dense multiply-accumulates at full precision, one instance
  LayerRole role = LayerRole::Linear;
  std::uint32_t count = 1;  // instances in the model (e.g. one per transformer block)
};

enum class Precision : std::uint8_t { Full, Quantized };
enum class SpikePolarity : std::uint8_t { None, Binary, Ternary };

struct BitConfig {
  Precision precision = Precision::Full;
  int w_bits = 0;
  int a_bits = 0;
  SpikePolarity spike = SpikePolarity::None;
  double T = 1.0;
  double d_steps = 1.0;
  std::optional<double> rate;
  bool half_lane_binary = false;  // see decomposition_factor

  bool is_spike() const noexcept { return spike != SpikePolarity::None; }

  /// Bits the activation operand enters the decomposition with.
  int decomposition_a_bits() const noexcept {
    switch (spike) {
      case SpikePolarity::Binary: return 1;
      case SpikePolarity::Ternary: return 2;
      case SpikePolarity::None: return a_bits;
    }
    return a_bits;
  }

  /// "fp", "4-4", "4-1", "4-1.58".
  std::string label() const {
    if (precision == Precision::Full) return "fp";
    std::string a = spike == SpikePolarity::Ternary ? "1.58" : std::to_string(decomposition_a_bits());
    return std::to_string(w_bits) + "-" + a;
  }

  static BitConfig full() { return {}; }
  static BitConfig dense(int w_bits, int a_bits) {
    return {Precision::Quantized, w_bits, a_bits, SpikePolarity::None, 1.0, 1.0, std::nullopt, false};
  }
  static BitConfig spiking(int w_bits, SpikePolarity polarity, double T, double d_steps, std::optional<double> rate) {
    return {Precision::Quantized, w_bits, polarity == SpikePolarity::Binary ? 1 : 2, polarity, T, d_steps, rate, false};
  }
};

inline double flops_dense(const LayerShape& shape, const BitConfig& bits) {
  if (bits.precision == Precision::Full) return shape.macs_fp;
  return shape.macs_fp * decomposition_factor(bits.w_bits, bits.decomposition_a_bits(), bits.half_lane_binary).value();
}

/// Quantized FLOPs scaled by the unfolded window and the fraction of slots that fire.
inline double flops_spike(const LayerShape& shape, const BitConfig& cfg) {
  require(cfg.is_spike(), ErrorCode::InvalidArgument, "flops_spike needs a spiking config");
  require(cfg.rate.has_value(), ErrorCode::MissingRate, "no firing rate for spiking layer '" + shape.name + "'");
  require(*cfg.rate >= 0.0 && *cfg.rate <= 1.0, ErrorCode::InvalidArgument, "firing rate outside [0, 1]");
  return shape.macs_fp * cfg.T * cfg.d_steps * *cfg.rate *
         decomposition_factor(cfg.w_bits, cfg.decomposition_a_bits(), cfg.half_lane_binary).value();
}

enum class OpKind : std::uint8_t { MAC, AC };

inline double energy(double flops, OpKind kind) {
  require(flops >= 0, ErrorCode::InvalidArgument, "negative FLOPs");
  return flops * (kind == OpKind::MAC ? kEnergyMacJoules : kEnergyAcJoules);
}

struct LayerCost {
  std::string name;
  LayerRole role = LayerRole::Linear;
  std::uint32_t count = 1;
  double macs_fp = 0;
  std::string bits;
  double T = 1;
  double d_steps = 1;
  std::optional<double> rate;
  double flops = 0;          // one instance
  double energy_joules = 0;  // one instance
};

struct CostReport {
  std::vector<LayerCost> layers;
  double total_flops = 0;
  double total_energy_joules = 0;

  const LayerCost* find(const std::string& name) const {
    for (const auto& l : layers)
      if (l.name == name) return &l;
    return nullptr;
  }
};

struct LayerPlan {
  LayerShape shape;
  BitConfig bits;
};

/// Layer-wise FLOPs and energy. Spiking layers are charged AC energy, all others MAC.
/// Totals weight each entry by its instance count.
inline CostReport model_report(const std::vector<LayerPlan>& plan) {
  CostReport report;
  long double flops = 0, joules = 0;
  for (const auto& [shape, bits] : plan) {
    require(shape.macs_fp > 0, ErrorCode::InvalidArgument, "layer '" + shape.name + "' has no work");
    LayerCost c;
    c.name = shape.name;
    c.role = shape.role;
    c.count = shape.count;
    c.macs_fp = shape.macs_fp;
    c.bits = bits.label();
    if (bits.is_spike()) {
      c.T = bits.T;
      c.d_steps = bits.d_steps;
      c.rate = bits.rate;
      c.flops = flops_spike(shape, bits);
      c.energy_joules = energy(c.flops, OpKind::AC);
    } else {
      c.flops = flops_dense(shape, bits);
      c.energy_joules = energy(c.flops, OpKind::MAC);
    }
    flops += static_cast<long double>(c.flops) * c.count;
    joules += static_cast<long double>(c.energy_joules) * c.count;
    report.layers.push_back(std::move(c));
  }
  report.total_flops = static_cast<double>(flops);
  report.total_energy_joules = static_cast<double>(joules);
  return report;
}

/// Six significant digits, the stable form used by every report.
inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline void write_table(std::ostream& os, const CostReport& r) {
  os << std::left << std::setw(12) << "layer" << std::setw(10) << "role" << std::right << std::setw(6) << "count"
     << std::setw(8) << "bits" << std::setw(10) << "TxD" << std::setw(10) << "R" << std::setw(14) << "FLOPs(G)"
     << std::setw(14) << "Power(mJ)" << '\n';
  for (const auto& l : r.layers) {
    const std::string td = format_number(l.T) + "x" + format_number(l.d_steps);
    os << std::left << std::setw(12) << l.name << std::setw(10) << to_string(l.role) << std::right << std::setw(6)
       << l.count << std::setw(8) << l.bits << std::setw(10) << td << std::setw(10)
       << (l.rate ? format_number(*l.rate) : std::string("-")) << std::setw(14) << format_number(l.flops / 1e9)
       << std::setw(14) << format_number(l.energy_joules * 1e3) << '\n';
  }
  os << "total FLOPs(T) " << format_number(r.total_flops / 1e12) << "  Power(J) "
     << format_number(r.total_energy_joules) << '\n';
}

/// One `key=value` record per layer plus a totals record.
inline void write_records(std::ostream& os, const CostReport& r) {
  for (const auto& l : r.layers) {
    os << "layer=" << l.name << " role=" << to_string(l.role) << " count=" << l.count << " bits=" << l.bits
       << " T=" << format_number(l.T) << " D=" << format_number(l.d_steps)
       << " R=" << (l.rate ? format_number(*l.rate) : std::string("-")) << " macs=" << format_number(l.macs_fp)
       << " flops=" << format_number(l.flops) << " energy_J=" << format_number(l.energy_joules) << '\n';
  }
  os << "total flops=" << format_number(r.total_flops) << " energy_J=" << format_number(r.total_energy_joules) << '\n';
}

/// A golden cell such as `k_proj.flops_G = 1.92 0.01`: the report value in the unit named by
/// the suffix must lie within the relative tolerance of the expected value.
struct GoldenCell {
  std::string key;
  double expected = 0;
  double rel_tol = 0;
};

struct GoldenResult {
  GoldenCell cell;
  double actual = 0;
  bool pass = false;
  double relative_error() const noexcept { return std::abs(actual / cell.expected - 1.0); }
};

inline std::vector<GoldenCell> parse_golden(std::istream& in) {
  std::vector<GoldenCell> cells;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    require(eq != std::string::npos, ErrorCode::ParseError, "golden line " + std::to_string(lineno) + " has no '='");
    std::istringstream key_stream(line.substr(0, eq));
    std::istringstream val_stream(line.substr(eq + 1));
    GoldenCell c;
    key_stream >> c.key;
    require(static_cast<bool>(val_stream >> c.expected >> c.rel_tol) && !c.key.empty(), ErrorCode::ParseError,
            "golden line " + std::to_string(lineno) + " must read `key = expected rel_tol`");
    cells.push_back(c);
  }
  return cells;
}

inline double golden_value(const CostReport& r, const std::string& key) {
  const auto dot = key.rfind('.');
  require(dot != std::string::npos, ErrorCode::ParseError, "golden key '" + key + "' needs <layer>.<metric>");
  const std::string owner = key.substr(0, dot);
  const std::string metric = key.substr(dot + 1);
  double flops = 0, joules = 0;
  if (owner == "total") {
    flops = r.total_flops;
    joules = r.total_energy_joules;
  } else {
    const LayerCost* l = r.find(owner);
    require(l != nullptr, ErrorCode::ParseError, "golden key names unknown layer '" + owner + "'");
    flops = l->flops;
    joules = l->energy_joules;
  }
  static const std::map<std::string, std::pair<bool, double>> units = {
      {"flops_T", {true, 1e12}}, {"flops_G", {true, 1e9}}, {"flops", {true, 1.0}},
      {"energy_J", {false, 1.0}}, {"energy_mJ", {false, 1e-3}}};
  const auto it = units.find(metric);
  require(it != units.end(), ErrorCode::ParseError, "unknown golden metric '" + metric + "'");
  return (it->second.first ? flops : joules) / it->second.second;
}

inline std::vector<GoldenResult> check_golden(const CostReport& r, const std::vector<GoldenCell>& cells) {
  std::vector<GoldenResult> out;
  for (const auto& c : cells) {
    GoldenResult g{c, golden_value(r, c.key), false};
    g.pass = g.relative_error() <= c.rel_tol;
    out.push_back(g);
  }
  return out;
}

}  // namespace spikedrive::cost
