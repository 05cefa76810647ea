#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cost.hpp"
#include "error.hpp"

namespace spikedrive::cost {

/// A model architecture as a list of per-block layers whose MAC counts are products over
/// named dimensions, e.g. "N*Dh*Di" or "2*N*N*Dh".
struct ModelCatalog {
  std::string name;
  std::map<std::string, double> dims;
  std::uint32_t blocks = 1;
  struct Layer {
    std::string name;
    std::string macs;
    LayerRole role = LayerRole::Linear;
  };
  std::vector<Layer> layers;

  double evaluate(const std::string& expr) const {
    double v = 1.0;
    std::size_t pos = 0;
    bool any = false;
    while (pos <= expr.size()) {
      const std::size_t star = std::min(expr.find('*', pos), expr.size());
      std::string term = expr.substr(pos, star - pos);
      term.erase(0, term.find_first_not_of(" \t"));
      term.erase(term.find_last_not_of(" \t") + 1);
      require(!term.empty(), ErrorCode::ParseError, "empty factor in '" + expr + "'");
      if (std::isdigit(static_cast<unsigned char>(term[0]))) {
        std::size_t used = 0;
        const double lit = std::stod(term, &used);
        require(used == term.size(), ErrorCode::ParseError, "bad number '" + term + "' in '" + expr + "'");
        v *= lit;
      } else {
        const auto it = dims.find(term);
        require(it != dims.end(), ErrorCode::ParseError, "unknown dimension '" + term + "' in '" + expr + "'");
        v *= it->second;
      }
      any = true;
      pos = star + 1;
    }
    require(any, ErrorCode::ParseError, "empty MAC expression");
    return v;
  }

  std::vector<LayerShape> shapes() const {
    std::vector<LayerShape> out;
    for (const auto& l : layers) out.push_back({l.name, evaluate(l.macs), l.role, blocks});
    return out;
  }
};

inline ModelCatalog parse_catalog(const nlohmann::json& j) {
  try {
    ModelCatalog c;
    c.name = j.at("name").get<std::string>();
    for (const auto& [k, v] : j.at("dims").items()) c.dims[k] = v.get<double>();
    c.blocks = j.at("blocks").get<std::uint32_t>();
    for (const auto& l : j.at("layers")) {
      const std::string role = l.value("role", "linear");
      require(role == "linear" || role == "attention", ErrorCode::ParseError, "unknown layer role '" + role + "'");
      c.layers.push_back({l.at("name").get<std::string>(), l.at("macs").get<std::string>(),
                          role == "linear" ? LayerRole::Linear : LayerRole::Attention});
    }
    require(!c.layers.empty(), ErrorCode::ParseError, "catalog '" + c.name + "' lists no layers");
    for (const auto& l : c.layers) c.evaluate(l.macs);
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("malformed catalog: ") + e.what());
  }
}

inline ModelCatalog load_catalog(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), ErrorCode::ParseError, "cannot open catalog '" + path + "'");
  try {
    return parse_catalog(nlohmann::json::parse(f));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::ParseError, "catalog '" + path + "' is not valid JSON: " + e.what());
  }
}

/// Firing rates for a spiking run: per-layer values with an optional fallback for the rest.
struct RateTable {
  std::map<std::string, double> per_layer;
  std::optional<double> fallback;

  std::optional<double> lookup(const std::string& layer) const {
    const auto it = per_layer.find(layer);
    if (it != per_layer.end()) return it->second;
    return fallback;
  }
};

/// "0.216" (scalar) or "k_proj=0.2230,out_proj=0.2028,*=0.216".
inline RateTable parse_rates(const std::string& text) {
  RateTable t;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, comma - pos);
    const std::size_t eq = item.find('=');
    try {
      std::size_t used = 0;
      const std::string num = eq == std::string::npos ? item : item.substr(eq + 1);
      const double v = std::stod(num, &used);
      require(used == num.size(), ErrorCode::ParseError, "bad rate '" + item + "'");
      if (eq == std::string::npos || item.substr(0, eq) == "*")
        t.fallback = v;
      else
        t.per_layer[item.substr(0, eq)] = v;
    } catch (const std::logic_error&) {
      fail(ErrorCode::ParseError, "bad rate '" + item + "'");
    }
    pos = comma + 1;
  }
  return t;
}

/// "fp", "4-4" (dense), "4-1" (binary spikes) or "4-1.58" (ternary spikes).
inline BitConfig parse_bits(const std::string& text, double T, double d_steps) {
  if (text == "fp") return BitConfig::full();
  const std::size_t dash = text.find('-');
  require(dash != std::string::npos, ErrorCode::ParseError, "bits must read w-a, got '" + text + "'");
  int w = 0;
  try {
    std::size_t used = 0;
    w = std::stoi(text.substr(0, dash), &used);
    require(used == dash, ErrorCode::ParseError, "bad weight bits in '" + text + "'");
  } catch (const std::logic_error&) {
    fail(ErrorCode::ParseError, "bad weight bits in '" + text + "'");
  }
  const std::string a = text.substr(dash + 1);
  if (a == "1") return BitConfig::spiking(w, SpikePolarity::Binary, T, d_steps, std::nullopt);
  if (a == "1.58") return BitConfig::spiking(w, SpikePolarity::Ternary, T, d_steps, std::nullopt);
  try {
    std::size_t used = 0;
    const int ab = std::stoi(a, &used);
    require(used == a.size() && ab >= 2, ErrorCode::ParseError, "bad activation bits in '" + text + "'");
    return BitConfig::dense(w, ab);
  } catch (const std::logic_error&) {
    fail(ErrorCode::ParseError, "bad activation bits in '" + text + "'");
  }
}

/// "1x8", "1 x 16".
inline std::pair<double, double> parse_td(const std::string& text) {
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) s += c;
  const std::size_t x = s.find_first_of("xX");
  require(x != std::string::npos, ErrorCode::ParseError, "time steps must read T x D, got '" + text + "'");
  try {
    const double T = std::stod(s.substr(0, x));
    const double D = std::stod(s.substr(x + 1));
    require(T > 0 && D > 0, ErrorCode::ParseError, "T and D must be positive");
    return {T, D};
  } catch (const std::logic_error&) {
    fail(ErrorCode::ParseError, "bad time steps '" + text + "'");
  }
}

struct CostRequest {
  std::string bits = "fp";
  std::string td = "1x1";
  RateTable rates;
  std::map<std::string, double> d_override;  // per-layer unfold length
  std::vector<std::string> only;             // restrict to these layers; empty keeps all
  bool half_lane_binary = false;
};

/// Resolves a catalog and a request into a per-layer plan. Spiking layers without a rate are
/// rejected by `model_report`.
inline std::vector<LayerPlan> plan_catalog(const ModelCatalog& catalog, const CostRequest& req) {
  const auto [T, D] = parse_td(req.td);
  BitConfig base = parse_bits(req.bits, T, D);
  base.half_lane_binary = req.half_lane_binary;
  for (const auto& name : req.only) {
    bool found = false;
    for (const auto& l : catalog.layers) found = found || l.name == name;
    require(found, ErrorCode::InvalidArgument, "catalog has no layer '" + name + "'");
  }
  for (const auto& [name, d] : req.d_override) {
    bool found = false;
    for (const auto& l : catalog.layers) found = found || l.name == name;
    require(found && d > 0, ErrorCode::InvalidArgument, "bad unfold override for '" + name + "'");
  }
  std::vector<LayerPlan> plan;
  for (const LayerShape& shape : catalog.shapes()) {
    if (!req.only.empty() && std::find(req.only.begin(), req.only.end(), shape.name) == req.only.end()) continue;
    BitConfig b = base;
    if (b.is_spike()) {
      b.rate = req.rates.lookup(shape.name);
      if (const auto it = req.d_override.find(shape.name); it != req.d_override.end()) b.d_steps = it->second;
    }
    plan.push_back({shape, b});
  }
  return plan;
}

}  // namespace spikedrive::cost
