#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spikedrive/spikedrive.hpp"

#ifndef SPIKEDRIVE_DATA_DIR
#define SPIKEDRIVE_DATA_DIR "data"
#endif

namespace spikedrive::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2 };

namespace detail {

inline std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string resolve_catalog(const std::string& model, const std::string& dir) {
  if (std::filesystem::is_regular_file(model)) return model;
  return (std::filesystem::path(dir) / (model + ".json")).string();
}

struct EncodeArgs {
  std::string in, out, counts_out, stats_out, gamma, scheme = "sym", rotation = "hadamard-random-sign";
  int bits = 4;
  bool rotate = false;
  std::uint64_t seed = 0;
  double clip_q = 0, clip_alpha = kDefaultClipAlpha;
};

inline int run_encode(const EncodeArgs& a, std::ostream& out) {
  RealMatrix u = io::load_tensor(a.in).to_real();
  if (!a.gamma.empty()) {
    const RealMatrix g = io::load_tensor(a.gamma).to_real();
    require(g.rows() == 1, ErrorCode::ShapeMismatch, "gamma must be a single row");
    u = scale_columns(u, GammaVector({g.values().begin(), g.values().end()}));
  }
  if (a.rotate) u = sample_orthogonal(u.cols(), config::parse_rotation(a.rotation), a.seed).apply(u);
  EncodingConfig enc{a.bits, config::parse_scheme(a.scheme), 1};
  std::optional<ClipState> clip;
  if (a.clip_q > 0) {
    require(enc.scheme == EncodingScheme::AsymBinary, ErrorCode::InvalidArgument,
            "--clip-q produces non-negative activations; use --scheme asym");
    clip = calibrate_step(ClipState::make(a.clip_q, a.clip_alpha), u).freeze();
    u = qsrelu(u, clip->tau);
  }
  const SpikeCountMatrix counts = encode_counts(u, enc);
  const SpikeTrain train = unfold(counts, enc);
  const FiringStats fs = firing_stats(counts);

  std::ostringstream stats;
  using cost::format_number;
  stats << "scheme=" << to_string(enc.scheme) << " bits=" << enc.bits << " T=" << train.T << " D=" << train.d_steps
        << " rows=" << train.rows << " cols=" << train.cols << '\n';
  stats << "delta=" << format_number(counts.params.delta) << " zero_point=" << counts.params.zero_point << '\n';
  if (clip) stats << "clip q=" << format_number(clip->q) << " tau=" << format_number(clip->tau) << '\n';
  stats << "R=" << format_number(fs.rate) << " mean_k=" << format_number(fs.mean_count)
        << " events=" << event_count(train) << '\n';
  for (const auto& [k, p] : fs.histogram) stats << "hist k=" << k << " p=" << format_number(p) << '\n';
  // Inline counts only for small tensors; --counts-out covers the rest.
  if (counts.counts.size() <= 4096) {
    stats << "counts=";
    for (std::size_t i = 0; i < counts.counts.size(); ++i) stats << (i ? "," : "") << counts.counts[i];
    stats << '\n';
  }

  io::save_train(a.out, train);
  if (!a.counts_out.empty()) io::save_tensor(a.counts_out, io::TensorFile::from(counts.counts));
  const std::string stats_path = a.stats_out.empty() ? a.out + ".stats" : a.stats_out;
  io::write_file(stats_path, [&](std::ostream& os) { os << stats.str(); });
  out << stats.str();
  return kOk;
}

inline int run_fold(const std::string& train_path, const std::string& out_path, std::ostream& out) {
  const SpikeTrain train = io::load_train(train_path);
  const SpikeCountMatrix counts = fold(train);
  io::save_tensor(out_path, io::TensorFile::from(counts.counts));
  out << "rows=" << counts.counts.rows() << " cols=" << counts.cols() << " events=" << event_count(train) << '\n';
  return kOk;
}

inline IntMatrix integer_weights(const io::TensorFile& t) {
  if (t.dtype != io::DType::Real64) return t.to_int();
  const RealMatrix w = t.to_real();
  IntMatrix out(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.size(); ++i) {
    require(w[i] == std::trunc(w[i]) && std::abs(w[i]) < 9.0e15, ErrorCode::InvalidArgument,
            "matmul-check needs integer weights");
    out[i] = static_cast<std::int64_t>(w[i]);
  }
  return out;
}

inline int run_matmul_check(const std::string& w_path, const std::string& train_path, bool dense_ref,
                            unsigned threads, std::ostream& out) {
  const IntMatrix w = integer_weights(io::load_tensor(w_path));
  const SpikeTrain train = io::load_train(train_path);
  require(train.cols == w.rows(), ErrorCode::DimMismatch,
          "train width " + std::to_string(train.cols) + " != weight rows " + std::to_string(w.rows()));
  KernelStats stats;
  const IntMatrix got = spike_matmul<std::int64_t>(w, train, &stats, KernelOptions{{}, threads});
  const IntMatrix ref = dense_matmul_reference<std::int64_t>(fold(train).counts, w);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < got.size(); ++i) mismatches += got[i] != ref[i] ? 1 : 0;
  out << (mismatches == 0 ? "PASS" : "FAIL") << " rows=" << got.rows() << " cols=" << got.cols()
      << " events=" << event_count(train) << " column_adds=" << stats.column_adds << " mismatches=" << mismatches
      << '\n';
  if (dense_ref) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::int64_t v : ref.values())
      for (int b = 0; b < 8; ++b) h = (h ^ ((static_cast<std::uint64_t>(v) >> (8 * b)) & 0xFF)) * 0x100000001b3ULL;
    out << "dense_ref digest=" << hex64(h) << '\n';
  }
  return mismatches == 0 ? kOk : kCheckFailed;
}

struct CostArgs {
  std::string model, bits = "fp", td = "1x1", rates, golden, format = "table", catalog_dir;
  std::vector<std::string> d_override, layers;
  std::string binary_lane = "full";
};

inline int run_cost(const CostArgs& a, std::ostream& out) {
  const cost::ModelCatalog catalog = cost::load_catalog(resolve_catalog(a.model, a.catalog_dir));
  cost::CostRequest req;
  req.bits = a.bits;
  req.td = a.td;
  if (!a.rates.empty()) req.rates = cost::parse_rates(a.rates);
  for (const auto& item : a.d_override) {
    const auto eq = item.find('=');
    require(eq != std::string::npos, ErrorCode::ParseError, "--d expects layer=D, got '" + item + "'");
    try {
      req.d_override[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
    } catch (const std::logic_error&) {
      fail(ErrorCode::ParseError, "--d expects layer=D, got '" + item + "'");
    }
  }
  req.only = a.layers;
  req.half_lane_binary = a.binary_lane == "half";
  const cost::CostReport report = cost::model_report(cost::plan_catalog(catalog, req));
  out << "model=" << catalog.name << " bits=" << a.bits << " TxD=" << a.td << '\n';
  if (a.format == "kv")
    cost::write_records(out, report);
  else
    cost::write_table(out, report);
  if (a.golden.empty()) return kOk;

  auto f = io::open_input(a.golden);
  bool all = true;
  for (const auto& g : cost::check_golden(report, cost::parse_golden(f))) {
    all = all && g.pass;
    out << (g.pass ? "PASS " : "FAIL ") << g.cell.key << " expected=" << cost::format_number(g.cell.expected)
        << " actual=" << cost::format_number(g.actual) << " rel_err=" << cost::format_number(g.relative_error())
        << " tol=" << cost::format_number(g.cell.rel_tol) << '\n';
  }
  return all ? kOk : kCheckFailed;
}

inline int run_pipeline(const std::string& config_path, const std::string& out_override, std::ostream& out) {
  config::RunConfig cfg = config::load_run_config(config_path);
  if (!out_override.empty()) cfg.output_dir = out_override;
  const pipeline::Block block = pipeline::build_block(cfg.block);
  const RealMatrix x = cfg.input.path.empty() ? pipeline::make_input(cfg.input.rows, cfg.block.d_h, cfg.input.seed)
                                              : io::load_tensor(cfg.input.path).to_real();

  if (cfg.plan.clips()) {
    pipeline::ClipTable table = cfg.plan.clip;
    for (std::size_t b = 0; b < cfg.calibration.batches; ++b) {
      pipeline::ExecPlan p = cfg.plan;
      p.clip = table;
      const RealMatrix xb = pipeline::make_input(x.rows(), cfg.block.d_h, cfg.calibration.seed + b);
      table = pipeline::forward(block, xb, p).clip;
    }
    cfg.plan.clip = pipeline::freeze(table);
  }
  const pipeline::ForwardResult r = pipeline::forward(block, x, cfg.plan);

  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path dir(cfg.output_dir);
  std::ostringstream report;
  pipeline::write_report(report, r.report);
  report << "digest=" << hex64(pipeline::output_digest(r.y)) << '\n';
  io::write_file((dir / "report.txt").string(), [&](std::ostream& os) { os << report.str(); });
  io::write_file((dir / "histograms.txt").string(),
                 [&](std::ostream& os) { pipeline::write_histograms(os, r.report); });
  io::save_tensor((dir / "output.sdlt").string(), io::TensorFile::from(r.y));
  io::write_file((dir / "config.resolved.json").string(),
                 [&](std::ostream& os) { os << config::to_json(cfg).dump(2) << '\n'; });
  out << report.str();

  if (!cfg.cost.catalog.empty()) {
    const auto rate = r.report.linear_rate();
    require(rate.has_value(), ErrorCode::MissingRate, "cost section needs a spiking mode to measure R");
    cost::CostRequest req;
    req.bits = cfg.cost.bits;
    req.td = cfg.cost.td;
    req.rates.fallback = *rate;
    const auto catalog = cost::load_catalog(resolve_catalog(cfg.cost.catalog, SPIKEDRIVE_DATA_DIR "/catalogs"));
    const cost::CostReport cr = cost::model_report(cost::plan_catalog(catalog, req));
    std::ostringstream cs;
    cost::write_records(cs, cr);
    io::write_file((dir / "cost.txt").string(), [&](std::ostream& os) { os << cs.str(); });
    out << cs.str();
  }
  return kOk;
}

inline int run_dispersion(std::size_t dim, std::size_t subset, std::size_t trials, std::uint64_t seed,
                          std::size_t rows, const std::string& kind, std::ostream& out) {
  require(subset >= 1 && subset <= dim, ErrorCode::InvalidArgument, "--subset must lie in [1, dim]");
  const RealMatrix x = pipeline::make_input(rows, dim, seed);
  std::vector<std::size_t> idx(subset);
  for (std::size_t i = 0; i < subset; ++i) idx[i] = i;
  const DispersionResult d = dispersion_estimate(x, idx, config::parse_rotation(kind), trials, seed + 1);
  out << "dim=" << dim << " subset=" << subset << " trials=" << trials << " kind=" << kind << '\n';
  out << "measured=" << cost::format_number(d.measured) << " predicted=" << cost::format_number(d.predicted)
      << " relative_error=" << cost::format_number(d.relative_error()) << '\n';
  return kOk;
}

}  // namespace detail

/// Entry point shared by the executable and the tests. Returns the process exit code.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spike-driven quantized inference toolkit", "spikedrive"};
  app.require_subcommand(1);

  detail::EncodeArgs enc;
  auto* c_enc = app.add_subcommand("encode", "Encode a real tensor into a spike train");
  c_enc->add_option("--in", enc.in, "input tensor")->required();
  c_enc->add_option("--bits", enc.bits, "quantization bits")->required();
  c_enc->add_option("--scheme", enc.scheme, "asym (binary spikes) or sym (ternary spikes)")
      ->check(CLI::IsMember({"asym", "sym"}));
  c_enc->add_option("--gamma", enc.gamma, "per-column scale tensor applied before rotation");
  c_enc->add_flag("--rotate", enc.rotate, "rotate columns before encoding");
  c_enc->add_option("--rotation", enc.rotation, "hadamard, hadamard-random-sign or haar");
  c_enc->add_option("--seed", enc.seed, "rotation seed");
  c_enc->add_option("--clip-q", enc.clip_q, "clip below this quantile after rotation");
  c_enc->add_option("--clip-alpha", enc.clip_alpha, "EMA factor of the clip threshold");
  c_enc->add_option("--out", enc.out, "output spike train")->required();
  c_enc->add_option("--counts-out", enc.counts_out, "also write the integer counts tensor");
  c_enc->add_option("--stats", enc.stats_out, "stats sidecar path (default <out>.stats)");

  std::string fold_in, fold_out;
  auto* c_fold = app.add_subcommand("fold", "Fold a spike train back into integer counts");
  c_fold->add_option("--train", fold_in, "input spike train")->required();
  c_fold->add_option("--out", fold_out, "output counts tensor")->required();

  std::string mm_w, mm_train;
  bool mm_dense = false;
  unsigned mm_threads = 1;
  auto* c_mm = app.add_subcommand("matmul-check", "Check spike matmul against the dense integer product");
  c_mm->add_option("--w", mm_w, "integer weight tensor")->required();
  c_mm->add_option("--train", mm_train, "spike train")->required();
  c_mm->add_flag("--dense-ref", mm_dense, "print a digest of the dense reference product");
  c_mm->add_option("--threads", mm_threads, "kernel threads")->check(CLI::Range(1u, 256u));

  detail::CostArgs ca;
  ca.catalog_dir = SPIKEDRIVE_DATA_DIR "/catalogs";
  auto* c_cost = app.add_subcommand("cost", "Per-layer FLOPs and energy for a model catalog");
  c_cost->add_option("--model", ca.model, "catalog name or path")->required();
  c_cost->add_option("--bits", ca.bits, "fp, w-a dense, w-1 binary spikes, w-1.58 ternary spikes");
  c_cost->add_option("--tD", ca.td, "time steps as T x D");
  c_cost->add_option("--rates", ca.rates, "scalar R or layer=R list (use *=R as fallback)");
  c_cost->add_option("--d", ca.d_override, "per-layer unfold length, layer=D");
  c_cost->add_option("--layers", ca.layers, "restrict to these layers")->delimiter(',');
  c_cost->add_option("--binary-lane", ca.binary_lane, "1-bit operands fill a full or half 2-bit lane")
      ->check(CLI::IsMember({"full", "half"}));
  c_cost->add_option("--golden", ca.golden, "compare against pinned cells");
  c_cost->add_option("--format", ca.format, "table or kv")->check(CLI::IsMember({"table", "kv"}));
  c_cost->add_option("--catalog-dir", ca.catalog_dir, "directory of catalog files");

  std::string pipe_cfg, pipe_out;
  auto* c_pipe = app.add_subcommand("pipeline", "Run the transformer-block harness from a run config");
  c_pipe->add_option("--config", pipe_cfg, "run config (JSON)")->required();
  c_pipe->add_option("--out", pipe_out, "override the output directory");

  std::size_t dd = 64, dm = 8, dt = 2000, drows = 1;
  std::uint64_t dseed = 0;
  std::string dkind = "haar";
  auto* c_disp = app.add_subcommand("dispersion", "Monte Carlo check of rotated quantization-cost dispersion");
  c_disp->add_option("--dim", dd, "width d");
  c_disp->add_option("--subset", dm, "subset size m");
  c_disp->add_option("--trials", dt, "rotations sampled");
  c_disp->add_option("--seed", dseed, "seed for data and rotations");
  c_disp->add_option("--rows", drows, "rows of the sampled activation");
  c_disp->add_option("--kind", dkind, "rotation family");

  std::vector<std::string> argv_store{"spikedrive"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (c_enc->parsed()) return detail::run_encode(enc, out);
    if (c_fold->parsed()) return detail::run_fold(fold_in, fold_out, out);
    if (c_mm->parsed()) return detail::run_matmul_check(mm_w, mm_train, mm_dense, mm_threads, out);
    if (c_cost->parsed()) return detail::run_cost(ca, out);
    if (c_pipe->parsed()) return detail::run_pipeline(pipe_cfg, pipe_out, out);
    if (c_disp->parsed()) return detail::run_dispersion(dd, dm, dt, dseed, drows, dkind, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace spikedrive::cli
