#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "codec.hpp"
#include "error.hpp"
#include "pipeline.hpp"
#include "rotation.hpp"
#include "sparsity.hpp"

namespace spikedrive::config {

using nlohmann::json;

/// Everything one `pipeline` run needs. All randomness derives from the seeds in here
/// (each fed to the library's mt19937_64-based Rng).
struct RunConfig {
  pipeline::BlockConfig block;
  struct Input {
    std::size_t rows = 16;
    std::uint64_t seed = 1;
    std::string path;  // tensor file; empty means generate from `seed`
  } input;
  pipeline::ExecPlan plan;
  struct Calibration {
    std::size_t batches = 4;
    std::uint64_t seed = 1000;
  } calibration;
  struct Cost {
    std::string catalog;  // empty disables the cost section
    std::string bits = "4-1.58";
    std::string td = "1x8";
  } cost;
  std::string output_dir = "out";
};

inline RotationKind parse_rotation(std::string_view s) {
  for (RotationKind k : {RotationKind::HadamardPlain, RotationKind::HadamardRandomSign, RotationKind::HaarQR})
    if (to_string(k) == s) return k;
  fail(ErrorCode::ConfigError, "unknown rotation '" + std::string(s) + "'");
}

inline EncodingScheme parse_scheme(std::string_view s) {
  if (s == "asym") return EncodingScheme::AsymBinary;
  if (s == "sym") return EncodingScheme::SymTernary;
  fail(ErrorCode::ConfigError, "unknown scheme '" + std::string(s) + "'");
}

namespace detail {

/// Collects every problem in a config instead of stopping at the first.
class Reader {
 public:
  std::vector<std::string> problems;

  bool object(const json& j, const std::string& path) {
    if (j.is_object()) return true;
    problems.push_back(path + ": expected an object");
    return false;
  }

  void keys(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
    for (const auto& [k, v] : j.items()) {
      bool ok = false;
      for (auto a : allowed) ok = ok || a == k;
      if (!ok) problems.push_back("unknown key '" + join(path, k) + "'");
    }
  }

  template <typename T>
  void get(const json& j, const std::string& path, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception&) {
      problems.push_back(join(path, key) + ": wrong type");
    }
  }

  /// Reads a string and converts it, recording conversion failures against the key.
  template <typename T, typename Fn>
  void get_enum(const json& j, const std::string& path, const char* key, T& out, Fn&& parse) {
    if (!j.contains(key)) return;
    std::string s;
    get(j, path, key, s);
    if (s.empty()) return;
    try {
      out = parse(s);
    } catch (const Error& e) {
      problems.push_back(join(path, key) + ": " + e.what());
    }
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }
};

}  // namespace detail

/// Parses a run config. Unknown keys, wrong types and invalid values are all reported together
/// in one ConfigError.
inline RunConfig parse_run_config(const json& j) {
  RunConfig c;
  detail::Reader rd;
  if (!rd.object(j, "<root>")) fail(ErrorCode::ConfigError, rd.problems.front());
  rd.keys(j, "", {"block", "input", "plan", "calibration", "cost", "output_dir"});

  if (j.contains("block") && rd.object(j["block"], "block")) {
    const json& b = j["block"];
    rd.keys(b, "block", {"d_h", "d_i", "n_blocks", "seed", "w_bits", "rotation"});
    rd.get(b, "block", "d_h", c.block.d_h);
    rd.get(b, "block", "d_i", c.block.d_i);
    rd.get(b, "block", "n_blocks", c.block.n_blocks);
    rd.get(b, "block", "seed", c.block.seed);
    rd.get(b, "block", "w_bits", c.block.w_bits);
    rd.get_enum(b, "block", "rotation", c.block.rotation, parse_rotation);
  }
  if (j.contains("input") && rd.object(j["input"], "input")) {
    const json& in = j["input"];
    rd.keys(in, "input", {"rows", "seed", "path"});
    rd.get(in, "input", "rows", c.input.rows);
    rd.get(in, "input", "seed", c.input.seed);
    rd.get(in, "input", "path", c.input.path);
  }
  if (j.contains("plan") && rd.object(j["plan"], "plan")) {
    const json& p = j["plan"];
    rd.keys(p, "plan", {"mode", "a_bits", "group", "schedule", "schedule_seed", "threads", "clip", "overrides"});
    rd.get_enum(p, "plan", "mode", c.plan.mode, pipeline::parse_mode);
    rd.get(p, "plan", "a_bits", c.plan.a_bits);
    rd.get_enum(p, "plan", "group", c.plan.group, pipeline::parse_group);
    rd.get_enum(p, "plan", "schedule", c.plan.schedule, pipeline::parse_schedule);
    rd.get(p, "plan", "schedule_seed", c.plan.schedule_seed);
    rd.get(p, "plan", "threads", c.plan.threads);
    if (p.contains("clip") && rd.object(p["clip"], "plan.clip")) {
      const json& cl = p["clip"];
      rd.keys(cl, "plan.clip", {"q", "alpha", "thresholds"});
      rd.get(cl, "plan.clip", "q", c.plan.clip_q);
      rd.get(cl, "plan.clip", "alpha", c.plan.clip_alpha);
      if (cl.contains("thresholds") && rd.object(cl["thresholds"], "plan.clip.thresholds")) {
        for (const auto& [name, tau] : cl["thresholds"].items()) {
          try {
            c.plan.clip[name] = ClipState::frozen(c.plan.clip_q, c.plan.clip_alpha, tau.get<double>());
          } catch (const std::exception& e) {
            rd.problems.push_back("plan.clip.thresholds." + name + ": " + e.what());
          }
        }
      }
    }
    if (p.contains("overrides") && rd.object(p["overrides"], "plan.overrides")) {
      for (const auto& [name, o] : p["overrides"].items()) {
        const std::string path = "plan.overrides." + name;
        if (!rd.object(o, path)) continue;
        rd.keys(o, path, {"bits", "scheme"});
        EncodingConfig e{c.plan.a_bits, c.plan.default_scheme(), 1};
        rd.get(o, path, "bits", e.bits);
        rd.get_enum(o, path, "scheme", e.scheme, parse_scheme);
        c.plan.overrides[name] = e;
      }
    }
  }
  if (j.contains("calibration") && rd.object(j["calibration"], "calibration")) {
    const json& cal = j["calibration"];
    rd.keys(cal, "calibration", {"batches", "seed"});
    rd.get(cal, "calibration", "batches", c.calibration.batches);
    rd.get(cal, "calibration", "seed", c.calibration.seed);
  }
  if (j.contains("cost") && rd.object(j["cost"], "cost")) {
    const json& co = j["cost"];
    rd.keys(co, "cost", {"catalog", "bits", "td"});
    rd.get(co, "cost", "catalog", c.cost.catalog);
    rd.get(co, "cost", "bits", c.cost.bits);
    rd.get(co, "cost", "td", c.cost.td);
  }
  rd.get(j, "", "output_dir", c.output_dir);

  if (rd.problems.empty()) {
    auto check = [&](auto&& fn) {
      try {
        fn();
      } catch (const Error& e) {
        rd.problems.emplace_back(e.what());
      }
    };
    check([&] { c.block.validate(); });
    check([&] { c.plan.validate(); });
    if (c.input.rows == 0) rd.problems.emplace_back("input.rows must be positive");
    if (c.plan.clips() && c.calibration.batches == 0 && c.plan.clip.empty())
      rd.problems.emplace_back("clipped mode needs calibration batches or frozen thresholds");
  }
  if (!rd.problems.empty()) {
    std::string msg = "invalid run config:";
    for (const auto& p : rd.problems) msg += "\n  " + p;
    fail(ErrorCode::ConfigError, msg);
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), ErrorCode::ConfigError, "cannot open config '" + path + "'");
  try {
    return parse_run_config(json::parse(f));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ConfigError, "config '" + path + "' is not valid JSON: " + e.what());
  }
}

/// The fully resolved config, clip thresholds included, as written next to run outputs.
inline json to_json(const RunConfig& c) {
  json j;
  j["block"] = {{"d_h", c.block.d_h},   {"d_i", c.block.d_i},       {"n_blocks", c.block.n_blocks},
                {"seed", c.block.seed}, {"w_bits", c.block.w_bits}, {"rotation", to_string(c.block.rotation)}};
  j["input"] = {{"rows", c.input.rows}, {"seed", c.input.seed}, {"path", c.input.path}};
  json plan = {{"mode", to_string(c.plan.mode)},
               {"a_bits", c.plan.a_bits},
               {"group", to_string(c.plan.group)},
               {"schedule", to_string(c.plan.schedule)},
               {"schedule_seed", c.plan.schedule_seed},
               {"threads", c.plan.threads}};
  json clip = {{"q", c.plan.clip_q}, {"alpha", c.plan.clip_alpha}};
  json thresholds = json::object();
  for (const auto& [name, s] : c.plan.clip) thresholds[name] = s.tau;
  clip["thresholds"] = thresholds;
  plan["clip"] = clip;
  json overrides = json::object();
  for (const auto& [name, e] : c.plan.overrides) overrides[name] = {{"bits", e.bits}, {"scheme", to_string(e.scheme)}};
  plan["overrides"] = overrides;
  j["plan"] = plan;
  j["calibration"] = {{"batches", c.calibration.batches}, {"seed", c.calibration.seed}};
  j["cost"] = {{"catalog", c.cost.catalog}, {"bits", c.cost.bits}, {"td", c.cost.td}};
  j["output_dir"] = c.output_dir;
  return j;
}

}  // namespace spikedrive::config
