#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "cdvft/chain.hpp"
#include "cdvft/checkpoint.hpp"
#include "cdvft/complexity.hpp"
#include "cdvft/config.hpp"
#include "cdvft/error.hpp"
#include "cdvft/gradcheck.hpp"
#include "cdvft/trainer.hpp"

// Command-line driver. Human-readable tables and one-line JSON records share
// stdout; every record line starts with '{' and carries a "record" field.
// Exit codes: 0 success, 1 computational failure, 2 usage.

namespace cdvft {

namespace cli_detail {

using json = nlohmann::json;

inline void emit(std::ostream& out, const json& record) { out << record.dump() << '\n'; }

struct Dims {
  std::size_t d = 0;
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::size_t p = 0;
  std::size_t m = 2;

  void add_to(CLI::App& app, std::size_t default_m = 2) {
    m = default_m;
    app.add_option("--d", d, "square dimension (sets d_in and d_out)");
    app.add_option("--d-in", d_in, "input dimension");
    app.add_option("--d-out", d_out, "output dimension");
    app.add_option("--p", p, "block size (default: max(d_in, d_out))");
    app.add_option("--m", m, "number of diagonal factors")->capture_default_str();
  }

  ChainShape shape() const {
    ChainShape s;
    s.d_in = d_in ? d_in : d;
    s.d_out = d_out ? d_out : d;
    if (s.d_in == 0 || s.d_out == 0) detail::fail(ErrorKind::kUsage, "give --d or both --d-in and --d-out");
    s.p = p ? p : std::max(s.d_in, s.d_out);
    s.m = m;
    return s;
  }
};

inline AdapterConfig cdvft_config(const ChainShape& s, double alpha) {
  AdapterConfig cfg;
  cfg.method = Method::kCdvft;
  cfg.d_in = s.d_in;
  cfg.d_out = s.d_out;
  cfg.p = s.p;
  cfg.m = s.m;
  cfg.alpha = alpha;
  return cfg;
}

inline json shape_json(const ChainShape& s) {
  return {{"d_in", s.d_in}, {"d_out", s.d_out}, {"p", s.p}, {"m", s.m}};
}

// --- gradcheck ---------------------------------------------------------------------

inline int run_gradcheck_cmd(const Dims& dims, std::uint32_t seed, std::size_t trials, double tol,
                             std::ostream& out) {
  const ChainShape s = dims.shape();
  const std::vector<GradcheckEntry> entries = run_gradcheck(s, seed, trials);
  bool ok = true;
  char line[160];
  std::snprintf(line, sizeof line, "%-18s %12s %14s\n", "kind", "coordinates", "max rel error");
  out << line;
  for (const auto& e : entries) {
    std::snprintf(line, sizeof line, "%-18s %12zu %14.3e\n", e.kind.c_str(), e.coordinates, e.max_rel_error);
    out << line;
  }
  for (const auto& e : entries) {
    const bool pass = e.max_rel_error < tol;
    ok = ok && pass;
    emit(out, {{"record", "gradcheck"},
               {"kind", e.kind},
               {"coordinates", e.coordinates},
               {"max_rel_error", e.max_rel_error},
               {"tolerance", tol},
               {"pass", pass}});
  }
  emit(out, {{"record", "gradcheck_summary"}, {"shape", shape_json(s)}, {"seed", seed}, {"pass", ok}});
  return ok ? 0 : 1;
}

// --- bench -------------------------------------------------------------------------

struct BenchArgs {
  std::vector<std::string> methods{"cdvft"};
  std::size_t d = 0, d_in = 0, d_out = 0, layers = 1;
  std::vector<std::size_t> ps;
  std::size_t m = 2, r = 8, n_coeffs = 1000;
  std::string workload;
  bool amortize = false;
  bool calibration = false;
};

// p = 0 means "max(d_in, d_out)", resolved after workload expansion.
inline std::vector<AdapterConfig> bench_configs(const BenchArgs& a) {
  std::vector<AdapterConfig> base;
  for (const std::string& name : a.methods) {
    const auto method = parse_method(name);
    if (!method) detail::fail(ErrorKind::kUsage, "unknown method '" + name + "'");
    AdapterConfig cfg;
    cfg.method = *method;
    cfg.d_in = a.d_in ? a.d_in : a.d;
    cfg.d_out = a.d_out ? a.d_out : a.d;
    cfg.layers = a.layers;
    cfg.m = a.m;
    cfg.r = a.r;
    cfg.n_coeffs = a.n_coeffs;
    cfg.amortize_spectra = a.amortize;
    if (*method != Method::kCdvft || a.ps.empty()) {
      base.push_back(cfg);
      continue;
    }
    for (std::size_t p : a.ps) {
      cfg.p = p;
      base.push_back(cfg);
    }
  }
  std::vector<AdapterConfig> out;
  for (const AdapterConfig& c : base) {
    if (a.workload.empty()) {
      if (c.d_in == 0 || c.d_out == 0) detail::fail(ErrorKind::kUsage, "give --d, --d-in/--d-out or --workload");
      out.push_back(c);
    } else {
      for (const AdapterConfig& e : expand_workload(c, find_workload(a.workload))) out.push_back(e);
    }
  }
  for (AdapterConfig& c : out) {
    if (c.method == Method::kCdvft && c.p == 0) c.p = std::max(c.d_in, c.d_out);
  }
  return out;
}

inline json config_json(const AdapterConfig& c) {
  json j = {{"method", to_string(c.method)}, {"d_out", c.d_out}, {"d_in", c.d_in}, {"layers", c.layers}};
  switch (c.method) {
    case Method::kCdvft:
      j["m"] = c.m;
      j["p"] = c.p;
      j["amortize_spectra"] = c.amortize_spectra;
      break;
    case Method::kLora:
    case Method::kVera:
      j["r"] = c.r;
      break;
    case Method::kFourierFt:
      j["n_coeffs"] = c.n_coeffs;
      break;
    case Method::kFullFinetune:
      break;
  }
  return j;
}

inline int run_calibration_cmd(std::ostream& out) {
  bool ok = true;
  char line[200];
  std::snprintf(line, sizeof line, "%-30s %-26s %16s %12s %10s\n", "target", "workload", "computed", "reference",
                "deviation");
  out << line;
  const auto results = run_calibration();
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-30s %-26s %16s %12s %+9.1f%%\n", r.target.label.c_str(),
                  r.target.workload.c_str(), human_count(r.computed_flops).c_str(),
                  human_count(static_cast<std::uint64_t>(r.target.reference_flops)).c_str(),
                  100.0 * r.relative_deviation);
    out << line;
  }
  const std::string note = ratio_conflict_note();
  out << "note: " << note << '\n';
  for (const auto& r : results) {
    ok = ok && r.within_tolerance;
    emit(out, {{"record", "calibration"},
               {"label", r.target.label},
               {"workload", r.target.workload},
               {"computed_flops", r.computed_flops},
               {"reference_flops", r.target.reference_flops},
               {"relative_deviation", r.relative_deviation},
               {"tolerance", r.target.tolerance},
               {"pass", r.within_tolerance}});
  }
  emit(out, {{"record", "ratio_note"}, {"text", note}});
  return ok ? 0 : 1;
}

inline int run_bench_cmd(const BenchArgs& a, std::ostream& out) {
  if (a.calibration) return run_calibration_cmd(out);
  const std::vector<ComplexityReport> reports = sweep_report(bench_configs(a));
  out << render_table(reports);
  std::uint64_t total_params = 0, total_flops = 0;
  for (const ComplexityReport& r : reports) {
    total_params += r.trainable_params;
    total_flops += r.flops_per_token;
    out << "params " << group_digits(r.trainable_params) << "  flops/token " << group_digits(r.flops_per_token)
        << "  [" << describe(r.config) << "]\n";
  }
  for (const ComplexityReport& r : reports) {
    emit(out, {{"record", "complexity"},
               {"index", r.index},
               {"config", config_json(r.config)},
               {"trainable_params", r.trainable_params},
               {"flops_per_layer", r.flops_per_layer},
               {"flops_per_token", r.flops_per_token}});
  }
  if (!a.workload.empty()) {
    emit(out, {{"record", "complexity_total"},
               {"workload", a.workload},
               {"trainable_params", total_params},
               {"flops_per_token", total_flops}});
  }
  return 0;
}

// --- train -------------------------------------------------------------------------

struct TrainArgs {
  std::string task = "matrix-recovery";
  Dims dims;
  std::size_t steps = 2000;
  std::size_t batch = 64;
  double lr = 1e-2;
  double weight_decay = 0.0;
  double alpha = 1.0;
  std::uint32_t seed = 0;
  std::size_t verify_every = 0;
  std::size_t print_every = 0;
  bool zero_target = false;
  std::string log_path;
  std::string checkpoint_path;
};

inline json log_json(const TrainLog& log, const ChainShape& s, const TrainArgs& a) {
  return {{"task", to_string(log.kind)},
          {"shape", shape_json(s)},
          {"seed", a.seed},
          {"steps", log.steps},
          {"batch", a.batch},
          {"lr", a.lr},
          {"alpha", a.alpha},
          {"initial_loss", log.initial_loss},
          {"final_loss", log.final_loss},
          {"final_relative_error", log.final_relative_error},
          {"initial_test_loss", log.initial_test_loss},
          {"final_test_loss", log.final_test_loss},
          {"verified_coordinates", log.verified_coordinates},
          {"gradcheck_max_rel_error", log.gradcheck_max_rel_error},
          {"success", log.success}};
}

inline int run_train_cmd(const TrainArgs& a, std::ostream& out) {
  ToyTask task;
  if (a.task == "matrix-recovery") {
    task.kind = TaskKind::kMatrixRecovery;
  } else if (a.task == "frozen-linear") {
    task.kind = TaskKind::kFrozenLinear;
  } else {
    detail::fail(ErrorKind::kUsage, "unknown task '" + a.task + "' (matrix-recovery, frozen-linear)");
  }
  task.steps = a.steps;
  task.batch = a.batch;
  task.seed = a.seed;
  task.optimizer.lr = a.lr;
  task.optimizer.weight_decay = a.weight_decay;
  task.verify_every = a.verify_every;
  task.zero_target = a.zero_target;
  const ChainShape s = a.dims.shape();
  const TrainResult result = run_task(cdvft_config(s, a.alpha), task);
  const TrainLog& log = result.log;

  const std::size_t every = a.print_every ? a.print_every : std::max<std::size_t>(1, a.steps / 10);
  for (std::size_t i = 0; i < log.losses.size(); ++i) {
    if (i % every == 0 || i + 1 == log.losses.size()) {
      emit(out, {{"record", "loss"}, {"step", i}, {"loss", log.losses[i]}});
    }
  }
  json summary = log_json(log, s, a);
  summary["record"] = "train";
  emit(out, summary);

  if (!a.log_path.empty()) {
    json full = log_json(log, s, a);
    full["losses"] = log.losses;
    std::ofstream f(a.log_path);
    if (!f) detail::fail(ErrorKind::kIo, "cannot open '" + a.log_path + "' for writing");
    f << full.dump(2) << '\n';
    if (!f) detail::fail(ErrorKind::kIo, "write failed for '" + a.log_path + "'");
  }
  if (!a.checkpoint_path.empty()) save_checkpoint(result.chain, a.checkpoint_path);
  return log.success ? 0 : 1;
}

// --- merge / export-dense -----------------------------------------------------------

inline int run_merge_cmd(const std::string& checkpoint, const std::string& weights, const std::string& output,
                         std::ostream& out) {
  const FactorChain ch = load_checkpoint(checkpoint);
  const DenseMatrix w = load_dense(weights);
  const DenseMatrix merged = merge(w, ch);
  save_dense(merged, output);
  emit(out, {{"record", "merge"},
             {"checkpoint", checkpoint},
             {"weights", weights},
             {"output", output},
             {"rows", merged.rows()},
             {"cols", merged.cols()}});
  return 0;
}

inline int run_export_cmd(const std::string& checkpoint, const std::string& output, std::ostream& out) {
  const FactorChain ch = load_checkpoint(checkpoint);
  const DenseMatrix dense = reconstruct_dense(ch);
  save_dense(dense, output);
  emit(out, {{"record", "export_dense"},
             {"checkpoint", checkpoint},
             {"output", output},
             {"rows", dense.rows()},
             {"cols", dense.cols()}});
  return 0;
}

// --- compare -----------------------------------------------------------------------

struct CompareArgs {
  std::vector<std::size_t> dims{16, 32, 64, 128, 256, 512};
  std::size_t m = 2;
  std::size_t repeats = 20;
  std::uint32_t seed = 0;
};

template <typename F>
double median_seconds(std::size_t repeats, F&& f) {
  std::vector<double> t;
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto start = std::chrono::steady_clock::now();
    f();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

/// FFT chain forward against reconstruct-then-matvec for one input vector,
/// and against a plain dense matvec with the matrix already built.
inline int run_compare_cmd(const CompareArgs& a, std::ostream& out) {
  std::mt19937_64 rng(a.seed);
  char line[200];
  std::snprintf(line, sizeof line, "%8s %4s %16s %20s %16s %10s\n", "d", "m", "fft path [us]",
                "reconstruct+mv [us]", "dense mv [us]", "speedup");
  out << line;
  std::size_t crossover = 0;
  std::vector<json> records;
  for (std::size_t d : a.dims) {
    const ChainShape s{d, d, d, a.m};
    const FactorChain ch = random_chain(s, 1.0, rng);
    const RealVector x = detail::normal_vector(d, rng);
    volatile double sink = 0.0;
    const double fft_t = median_seconds(a.repeats, [&] { sink = sink + chain_forward(ch, x).delta_h[0]; });
    const double rec_t = median_seconds(a.repeats, [&] { sink = sink + reconstruct_dense(ch).matvec(x)[0]; });
    const DenseMatrix dense = reconstruct_dense(ch);
    const double mv_t = median_seconds(a.repeats, [&] { sink = sink + dense.matvec(x)[0]; });
    const double speedup = rec_t / fft_t;
    if (crossover == 0 && speedup > 1.0) crossover = d;
    std::snprintf(line, sizeof line, "%8zu %4zu %16.2f %20.2f %16.2f %9.1fx\n", d, a.m, 1e6 * fft_t, 1e6 * rec_t,
                  1e6 * mv_t, speedup);
    out << line;
    records.push_back({{"record", "compare"},
                       {"d", d},
                       {"m", a.m},
                       {"fft_seconds", fft_t},
                       {"reconstruct_matvec_seconds", rec_t},
                       {"dense_matvec_seconds", mv_t}});
  }
  if (crossover) {
    out << "fft path beats reconstruct+matvec from d = " << crossover << '\n';
  } else {
    out << "fft path never beat reconstruct+matvec in this range\n";
  }
  for (const json& r : records) emit(out, r);
  emit(out, {{"record", "compare_summary"}, {"crossover_d", crossover}});
  return 0;
}

inline int report_error(std::ostream& err, ErrorKind kind, const std::string& message) {
  emit(err, {{"record", "error"}, {"category", to_string(kind)}, {"message", message}});
  return kind == ErrorKind::kUsage ? 2 : 1;
}

}  // namespace cli_detail

inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  using namespace cli_detail;
  CLI::App app{"CDVFT adapter toolkit: gradient checks, cost model, toy training, merge"};
  app.require_subcommand(1);

  std::uint32_t gc_seed = 0;
  std::size_t gc_trials = 1;
  double gc_tol = kGradcheckTolerance;
  Dims gc_dims;
  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference check of every backward path");
  gc_dims.add_to(*gc);
  gc->add_option("--seed", gc_seed)->capture_default_str();
  gc->add_option("--trials", gc_trials)->capture_default_str();
  gc->add_option("--tol", gc_tol)->capture_default_str();

  BenchArgs bench;
  CLI::App* bc = app.add_subcommand("bench", "parameter and FLOP accounting");
  bc->add_option("--method", bench.methods, "cdvft, lora, vera, fourierft, ff (repeatable)")->capture_default_str();
  bc->add_option("--d", bench.d);
  bc->add_option("--d-in", bench.d_in);
  bc->add_option("--d-out", bench.d_out);
  bc->add_option("--layers", bench.layers)->capture_default_str();
  bc->add_option("--p", bench.ps, "block size, repeatable for a sweep");
  bc->add_option("--m", bench.m)->capture_default_str();
  bc->add_option("--r", bench.r)->capture_default_str();
  bc->add_option("--n", bench.n_coeffs, "fourierft coefficients")->capture_default_str();
  bc->add_option("--workload", bench.workload, "named layer set (overrides dims and --layers)");
  bc->add_flag("--amortize", bench.amortize, "treat generator spectra as precomputed");
  bc->add_flag("--calibration", bench.calibration, "compare the model against published FLOP figures");

  TrainArgs train;
  CLI::App* tc = app.add_subcommand("train", "toy training run");
  tc->add_option("--task", train.task, "matrix-recovery or frozen-linear")->capture_default_str();
  train.dims.add_to(*tc);
  tc->add_option("--steps", train.steps)->capture_default_str();
  tc->add_option("--batch", train.batch)->capture_default_str();
  tc->add_option("--lr", train.lr)->capture_default_str();
  tc->add_option("--weight-decay", train.weight_decay)->capture_default_str();
  tc->add_option("--alpha", train.alpha)->capture_default_str();
  tc->add_option("--seed", train.seed)->capture_default_str();
  tc->add_option("--verify-every", train.verify_every, "spot finite-difference check period");
  tc->add_option("--print-every", train.print_every);
  tc->add_flag("--zero-target", train.zero_target);
  tc->add_option("--log", train.log_path, "write the full TrainLog as JSON");
  tc->add_option("--checkpoint", train.checkpoint_path, "write the trained adapter");

  std::string mg_ckpt, mg_weights, mg_out;
  CLI::App* mc = app.add_subcommand("merge", "fold a checkpoint into a dense weight file");
  mc->add_option("--checkpoint", mg_ckpt)->required();
  mc->add_option("--weights", mg_weights)->required();
  mc->add_option("--out", mg_out)->required();

  CompareArgs compare;
  CLI::App* cc = app.add_subcommand("compare", "time the FFT path against dense reconstruction");
  cc->add_option("--dims", compare.dims)->capture_default_str();
  cc->add_option("--m", compare.m)->capture_default_str();
  cc->add_option("--repeats", compare.repeats)->capture_default_str();
  cc->add_option("--seed", compare.seed)->capture_default_str();

  std::string ex_ckpt, ex_out;
  CLI::App* ec = app.add_subcommand("export-dense", "write the reconstructed delta_W");
  ec->add_option("--checkpoint", ex_ckpt)->required();
  ec->add_option("--out", ex_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return report_error(err, ErrorKind::kUsage, e.what());
  }

  try {
    if (gc->parsed()) return run_gradcheck_cmd(gc_dims, gc_seed, gc_trials, gc_tol, out);
    if (bc->parsed()) return run_bench_cmd(bench, out);
    if (tc->parsed()) return run_train_cmd(train, out);
    if (mc->parsed()) return run_merge_cmd(mg_ckpt, mg_weights, mg_out, out);
    if (cc->parsed()) return run_compare_cmd(compare, out);
    if (ec->parsed()) return run_export_cmd(ex_ckpt, ex_out, out);
  } catch (const Error& e) {
    return report_error(err, e.kind(), e.what());
  } catch (const std::exception& e) {
    return report_error(err, ErrorKind::kIo, e.what());
  }
  return report_error(err, ErrorKind::kUsage, "no subcommand");
}

}  // namespace cdvft
