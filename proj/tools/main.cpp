// narxmpc command-line tool.
//
//   narxmpc generate  --config twotank.cfg --D 101 --out data/
//   narxmpc fit       --dataset data/dataset_D101.csv --out data/
//   narxmpc simulate  --model data/model_D101.csv --out data/
//   narxmpc certify   --model data/model_D101.csv --trace data/trace_D101.csv --out data/
//   narxmpc benchmark --config twotank.cfg --out bundle/
//
// Exit codes: 0 success, 1 I/O, configuration or run failure, 2 verdict failure
// (the Lyapunov decrease was violated).

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "narxmpc/benchmark.hpp"
#include "narxmpc/config.hpp"
#include "narxmpc/io.hpp"

using namespace narxmpc;

namespace {

constexpr int kOk = 0, kFailure = 1, kVerdict = 2;

struct Options {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  bool verbose = false;
  std::optional<int> D;
  std::vector<int> only_D;
  std::optional<int> steps;
  std::optional<int> horizon;
  std::optional<double> sigma;
  std::optional<double> jitter;
  std::string model;
  std::string trace;
  std::string dataset;
};

class Run {
 public:
  Run(std::string subcommand, const Options& o) : o_(o), start_(std::chrono::steady_clock::now()) {
    cfg_ = o.config.empty() ? BenchmarkConfig{} : load_config(o.config);
    if (o.seed) cfg_.seed = *o.seed;
    if (o.D) cfg_.D_values = {*o.D};
    if (!o.only_D.empty()) cfg_.D_values = o.only_D;
    if (o.steps) cfg_.steps = *o.steps;
    if (o.horizon) cfg_.N = *o.horizon;
    if (o.sigma) cfg_.sigma = *o.sigma;
    if (o.jitter) cfg_.jitter = *o.jitter;
    cfg_.validate();
    manifest_.subcommand = std::move(subcommand);
    manifest_.config_path = o.config;
    manifest_.version = toolkit_version();
  }

  BenchmarkConfig& cfg() { return cfg_; }
  fs::path out(const std::string& name) const { return fs::path(o_.out) / name; }
  void input(const fs::path& p) { manifest_.inputs.push_back(p); }
  void output(const fs::path& p) { manifest_.outputs.push_back(p); }
  void failure(const std::string& what) { manifest_.failures.push_back(what); }
  void log(const std::string& line) const {
    if (o_.verbose) std::cerr << line << '\n';
  }

  void finish() {
    manifest_.seed = cfg_.seed;
    manifest_.config_text = config_to_text(cfg_);
    manifest_.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const fs::path p = out("manifest_" + manifest_.subcommand + ".txt");
    write_manifest(p, manifest_);
    log("manifest: " + p.string());
  }

 private:
  const Options& o_;
  std::chrono::steady_clock::time_point start_;
  BenchmarkConfig cfg_;
  RunManifest manifest_;
};

std::string suffix(long D) { return "_D" + std::to_string(D); }

// The dimensions stored with a model must match the configuration.
void check_model(const KernelInterpolant& model, const BenchmarkConfig& cfg) {
  if (model.dims() != cfg.dims()) {
    throw ConfigError("model dimensions do not match the configuration (nu = " +
                      std::to_string(cfg.nu) + ")");
  }
}

int cmd_generate(const Options& o) {
  Run run("generate", o);
  auto& cfg = run.cfg();
  for (const int D : cfg.D_values) {
    const Dataset data = generate_dataset(cfg.mode, cfg, D);
    const fs::path p = run.out("dataset" + suffix(D) + ".csv");
    write_dataset(data, p,
                  {{"mode", to_string(cfg.mode)},
                   {"seed", std::to_string(cfg.seed)},
                   {"sigma", format_double(cfg.sigma)},
                   {"jitter", format_double(cfg.jitter)}});
    run.output(p);
    run.output(sidecar_path(p));
    run.log("wrote " + p.string());
  }
  run.finish();
  return kOk;
}

int cmd_fit(const Options& o) {
  Run run("fit", o);
  auto& cfg = run.cfg();
  const fs::path in = o.dataset;
  const Dataset data = read_dataset(in);
  run.input(in);
  run.input(sidecar_path(in));
  const KernelInterpolant model =
      fit_interpolant(KernelSpec::wendland(data.dims.site_dim(), cfg.sigma), data, cfg.jitter);
  check_model(model, cfg);
  const FitReport report = assess_fit(model, cfg);
  const auto D = static_cast<long>(data.size());
  const fs::path mp = run.out("model" + suffix(D) + ".csv");
  const fs::path rp = run.out("fit_report" + suffix(D) + ".txt");
  write_model(model, mp);
  write_key_values(rp, report.to_key_values());
  for (const auto& p : {mp, sidecar_path(mp), rp}) run.output(p);
  run.log("c_x = " + format_double(report.errors.c_x) + ", c_u = " +
          format_double(report.errors.c_u) + ", fill distance = " +
          format_double(report.fill.value));
  run.finish();
  return kOk;
}

int cmd_simulate(const Options& o) {
  Run run("simulate", o);
  auto& cfg = run.cfg();
  const KernelInterpolant model = read_model(o.model);
  check_model(model, cfg);
  run.input(o.model);
  run.input(sidecar_path(o.model));
  const auto D = static_cast<long>(model.data().size());
  const auto plant = make_normalized_plant(cfg);
  const MpcConfig mpc = cfg.mpc_config();
  const ClosedLoopTrace trace =
      run_closed_loop(*plant, model, mpc, cfg.initial_state(), cfg.steps);
  const fs::path tp = run.out("trace" + suffix(D) + ".csv");
  const fs::path rp = run.out("trace" + suffix(D) + "_raw.csv");
  write_trace(trace, storage_matrix(cfg.dims(), mpc.weights), cfg.normalization(), tp, rp);
  run.output(tp);
  run.output(rp);
  int code = kOk;
  if (trace.failure) {
    run.failure("step " + std::to_string(trace.failure->step) + ": " + trace.failure->message);
    std::cerr << "error: closed loop stopped at step " << trace.failure->step << ": "
              << trace.failure->message << '\n';
    code = kFailure;
  }
  run.finish();
  return code;
}

int cmd_certify(const Options& o) {
  Run run("certify", o);
  auto& cfg = run.cfg();
  const KernelInterpolant model = read_model(o.model);
  check_model(model, cfg);
  const ClosedLoopTrace trace = read_trace(o.trace, cfg.dims());
  for (const fs::path p : {fs::path(o.model), sidecar_path(o.model), fs::path(o.trace)}) {
    run.input(p);
  }
  const auto D = static_cast<long>(model.data().size());
  const Certificate cert = certify(model, trace, cfg);
  const fs::path rp = run.out("stability_report" + suffix(D) + ".txt");
  const fs::path sp = run.out("stability_steps" + suffix(D) + ".csv");
  write_certificate(cert, rp, sp);
  run.output(rp);
  run.output(sp);
  const auto verdict = cert.report.verdict;
  std::cout << "verdict: " << to_string(verdict) << '\n';
  if (verdict == DecreaseVerdict::decrease_violated) {
    std::cout << "first violation at step " << cert.report.first_violation << '\n';
    run.failure("decrease violated at step " + std::to_string(cert.report.first_violation));
  }
  run.finish();
  return verdict == DecreaseVerdict::decrease_violated ? kVerdict : kOk;
}

int cmd_benchmark(const Options& o) {
  Run run("benchmark", o);
  auto& cfg = run.cfg();
  std::ostream* log = o.verbose ? &std::cerr : nullptr;
  const BenchmarkResult result = run_benchmark(cfg, fs::path(o.out), log);
  {
    std::ofstream f(run.out("config.txt"));
    f << config_to_text(cfg);
    if (!f) throw IoError("cannot write " + run.out("config.txt").string());
  }
  run.output(run.out("config.txt"));
  for (const auto& p : result.outputs) run.output(p);
  for (const auto& r : result.runs) {
    if (r.failure) run.failure("D=" + std::to_string(r.D) + " " + *r.failure);
    if (r.cert) {
      std::cout << "D=" << r.D << ": " << to_string(r.cert->report.verdict)
                << ", terminal error " << format_double(r.cert->report.error.back()) << '\n';
    }
  }
  run.finish();
  if (result.any_failure()) return kFailure;
  return result.any_verdict_failure() ? kVerdict : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-driven NARX MPC toolkit (two-tank benchmark)", "narxmpc"};
  app.set_version_flag("--version", toolkit_version());
  app.require_subcommand(1);
  app.fallthrough();

  Options o;
  app.add_option("--config", o.config, "key=value configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", o.out, "output directory")->capture_default_str();
  app.add_option("--seed", o.seed, "random seed (overrides the config)");
  app.add_flag("--verbose,-v", o.verbose, "progress messages on stderr");
  app.add_option("--steps", o.steps, "closed-loop steps");
  app.add_option("--horizon", o.horizon, "MPC horizon N");
  app.add_option("--sigma", o.sigma, "kernel lengthscale");
  app.add_option("--jitter", o.jitter, "diagonal jitter added to the kernel matrix");

  auto* gen = app.add_subcommand("generate", "generate normalized two-tank data sets");
  gen->add_option("--D", o.D, "data-set size (default: every D in the config)");

  auto* fit = app.add_subcommand("fit", "fit a kernel surrogate and assess it");
  fit->add_option("--dataset", o.dataset, "dataset CSV")->required()->check(CLI::ExistingFile);

  auto* sim = app.add_subcommand("simulate", "closed-loop MPC on the plant with a surrogate");
  sim->add_option("--model", o.model, "model CSV")->required()->check(CLI::ExistingFile);

  auto* cert = app.add_subcommand("certify", "stability certificate for a closed-loop trace");
  cert->add_option("--model", o.model, "model CSV")->required()->check(CLI::ExistingFile);
  cert->add_option("--trace", o.trace, "normalized trace CSV")->required()->check(CLI::ExistingFile);

  auto* bench = app.add_subcommand("benchmark", "full two-tank reproduction for every D");
  bench->add_option("--only-D", o.only_D, "restrict to these data-set sizes");
  bench->add_option("--D", o.D, "single data-set size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kFailure;
  }

  try {
    if (gen->parsed()) return cmd_generate(o);
    if (fit->parsed()) return cmd_fit(o);
    if (sim->parsed()) return cmd_simulate(o);
    if (cert->parsed()) return cmd_certify(o);
    return cmd_benchmark(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
