#include "narxmpc/benchmark.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace narxmpc {

namespace {

// Validation pairs and growth states use streams independent of the data.
constexpr std::uint64_t kValidationStream = 0x9e3779b97f4a7c15ULL;
constexpr int kProbesPerAxis = 8;

std::string fmt(double v) { return format_double(v); }

}  // namespace

KvList FitReport::to_key_values() const {
  return {{"D", std::to_string(D)},
          {"sigma", fmt(sigma)},
          {"jitter", fmt(jitter)},
          {"certificate_degraded", certificate_degraded ? "1" : "0"},
          {"max_site_residual", fmt(max_site_residual)},
          {"rkhs_norm", fmt(rkhs_norm)},
          {"c_x", fmt(errors.c_x)},
          {"c_u", fmt(errors.c_u)},
          {"error_samples", std::to_string(errors.sample_count)},
          {"max_residual_ratio", fmt(errors.max_residual_ratio)},
          {"fill_distance", fmt(fill.value)},
          {"fill_probes", std::to_string(fill.probe_count)},
          {"fill_probes_per_axis", std::to_string(probes_per_axis)},
          {"lipschitz_lower_bound", fmt(lipschitz_lower_bound)},
          {"max_power", fmt(max_power)}};
}

FitReport assess_fit(const KernelInterpolant& model, const BenchmarkConfig& cfg) {
  const DynamicsPtr plant = make_normalized_plant(cfg);
  const auto samples =
      sample_state_input_pairs(cfg, cfg.validation_samples, cfg.seed ^ kValidationStream);
  FitReport r;
  r.D = static_cast<std::size_t>(model.data().size());
  r.sigma = model.spec().lengthscale;
  r.jitter = model.jitter();
  r.certificate_degraded = model.jitter() > 0.0;
  r.max_site_residual = model.max_site_residual();
  r.rkhs_norm = model.rkhs_norm();
  r.errors = estimate_error_constants(*plant, model, samples);
  r.probes_per_axis = kProbesPerAxis;
  r.fill = fill_distance(model.data().sites, probe_grid(cfg.site_box(), kProbesPerAxis));

  std::vector<StatePair> pairs;
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    if ((samples[i].x - samples[i + 1].x).norm() > 1e-8) {
      pairs.push_back({samples[i].x, samples[i + 1].x, samples[i].u});
    }
  }
  r.lipschitz_lower_bound = estimate_lipschitz(model, pairs);
  for (const auto& s : samples) {
    r.max_power = std::max(r.max_power, model.power_function(make_site(s.x, s.u)).value);
  }
  return r;
}

Certificate certify(const NarxDynamics& surrogate, ClosedLoopTrace trace,
                    const BenchmarkConfig& cfg) {
  if (trace.steps.empty()) throw Error("certify: the trace has no steps");
  const MpcConfig mpc = cfg.mpc_config();
  Certificate c;
  c.storage = storage_matrix(cfg.dims(), mpc.weights);
  c.horizon = mpc.horizon;

  if (trace.terminal && !trace.terminal_V) {
    trace.terminal_V = solve_ocp(surrogate, *trace.terminal, mpc).value;
  }
  c.report = verify_decrease(trace, c.storage, {});

  if (cfg.growth_states > 0) {
    const auto states = sample_regressors(cfg, cfg.growth_states, 1e-3);
    const int horizon = cfg.growth_horizon > 0 ? cfg.growth_horizon : cfg.N;
    c.growth = estimate_growth_bound(surrogate, mpc, states, horizon, "surrogate");
    const double g = gamma_bar(*c.growth, c.storage);
    c.gamma_bar = g;
    if (g > 0.0) c.min_horizon = narxmpc::min_horizon(g, cfg.nu);
    for (std::size_t k = 0; k < c.report.Y.size(); ++k) {
      if (c.report.Y[k] > (g + 1.0) * c.report.W[k] + 1e-12) ++c.sandwich_violations;
    }
  }

  const auto samples =
      sample_state_input_pairs(cfg, cfg.validation_samples, cfg.seed ^ kValidationStream);
  c.detectability = check_detectability(surrogate, c.storage, samples);
  c.omega_excursions = find_domain_excursions(trace.states(), cfg.omega()).size();
  return c;
}

void write_certificate(const Certificate& c, const fs::path& report, const fs::path& steps_csv) {
  const StabilityReport& r = c.report;
  KvList kv;
  kv.emplace_back("verdict", to_string(r.verdict));
  kv.emplace_back("alpha_bar", fmt(r.alpha_bar));
  kv.emplace_back("first_violation", std::to_string(r.first_violation));
  kv.emplace_back("active_steps", std::to_string(r.active_steps));
  kv.emplace_back("decay_rate", fmt(r.decay_rate));
  kv.emplace_back("decay_r2", fmt(r.decay_r2));
  kv.emplace_back("eta", fmt(r.eta));
  kv.emplace_back("sigma_min_P", fmt(r.sigma_min));
  for (Eigen::Index i = 0; i < r.P.rows(); ++i) {
    std::string row;
    for (Eigen::Index j = 0; j < r.P.cols(); ++j) row += (j ? "," : "") + fmt(r.P(i, j));
    kv.emplace_back("P_row_" + std::to_string(i + 1), row);
  }
  kv.emplace_back("horizon", std::to_string(c.horizon));
  if (c.growth) {
    kv.emplace_back("growth_states", std::to_string(c.growth->states.size()));
    kv.emplace_back("growth_solver_failures", std::to_string(c.growth->solver_failures));
    kv.emplace_back("growth_unconverged", std::to_string(c.growth->unconverged));
    for (std::size_t N = 0; N < c.growth->B.size(); ++N) {
      kv.emplace_back("B_" + std::to_string(N + 1), fmt(c.growth->B[N]));
    }
  }
  if (c.gamma_bar) kv.emplace_back("gamma_bar", fmt(*c.gamma_bar));
  if (c.min_horizon) {
    kv.emplace_back("min_horizon", fmt(*c.min_horizon));
    kv.emplace_back("horizon_sufficient", c.horizon_sufficient() ? "1" : "0");
  }
  if (c.gamma_bar) kv.emplace_back("sandwich_violations", std::to_string(c.sandwich_violations));
  kv.emplace_back("detectability_samples", std::to_string(c.detectability.samples));
  kv.emplace_back("detectability_max_violation", fmt(c.detectability.max_violation));
  kv.emplace_back("detectability_passed", c.detectability.passed ? "1" : "0");
  kv.emplace_back("omega_excursions", std::to_string(c.omega_excursions));
  write_key_values(report, kv);

  CsvTable t;
  t.header = {"k", "Y", "W", "delta", "err"};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < r.error.size(); ++k) {
    t.rows.push_back({static_cast<double>(k), k < r.Y.size() ? r.Y[k] : nan, r.W[k],
                      k < r.delta.size() ? r.delta[k] : nan, r.error[k]});
  }
  write_csv(steps_csv, t);
}

bool BenchmarkResult::any_failure() const {
  for (const auto& r : runs) {
    if (r.failure) return true;
  }
  return false;
}

bool BenchmarkResult::any_verdict_failure() const {
  for (const auto& r : runs) {
    if (r.cert && r.cert->report.verdict == DecreaseVerdict::decrease_violated) return true;
  }
  return false;
}

CsvTable comparison_table(const BenchmarkConfig& cfg, const std::vector<BenchmarkRun>& runs) {
  CsvTable t;
  t.header.push_back("k");
  for (const auto& r : runs) t.header.push_back("y_D" + std::to_string(r.D));
  for (const auto& r : runs) t.header.push_back("err_D" + std::to_string(r.D));
  if (cfg.steps == 0) return t;
  const AffineNormalization nz = cfg.normalization();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<RegressorState>> states;
  for (const auto& r : runs) states.push_back(r.trace.states());
  for (int k = 0; k <= cfg.steps; ++k) {
    std::vector<double> row{static_cast<double>(k)};
    for (const auto& s : states) {
      row.push_back(k < static_cast<int>(s.size())
                        ? nz.denormalize_output(s[k].output())[0]
                        : nan);
    }
    for (const auto& s : states) {
      row.push_back(k < static_cast<int>(s.size()) ? s[k].values().norm() : nan);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, const std::optional<fs::path>& out_dir,
                              std::ostream* log) {
  cfg.validate();
  BenchmarkResult result;
  const DynamicsPtr plant = make_normalized_plant(cfg);
  const MpcConfig mpc = cfg.mpc_config();
  const StorageMatrix storage = storage_matrix(cfg.dims(), mpc.weights);

  for (const int D : cfg.D_values) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    BenchmarkRun run;
    run.D = D;
    const fs::path dir = out_dir ? *out_dir / ("D" + std::to_string(D)) : fs::path();
    auto emit = [&](const fs::path& p) { result.outputs.push_back(p); };
    std::string stage = "generate";
    try {
      const Dataset data = generate_dataset(cfg.mode, cfg, D);
      if (out_dir) {
        const fs::path p = dir / ("dataset_D" + std::to_string(D) + ".csv");
        write_dataset(data, p, {{"mode", to_string(cfg.mode)}, {"seed", std::to_string(cfg.seed)}});
        emit(p);
        emit(sidecar_path(p));
      }
      stage = "fit";
      run.model = std::make_shared<const KernelInterpolant>(
          fit_interpolant(KernelSpec::wendland(cfg.dims().site_dim(), cfg.sigma), data, cfg.jitter));
      run.fit = assess_fit(*run.model, cfg);
      if (out_dir) {
        const fs::path p = dir / "model.csv";
        write_model(*run.model, p);
        write_key_values(dir / "fit_report.txt", run.fit->to_key_values());
        emit(p);
        emit(sidecar_path(p));
        emit(dir / "fit_report.txt");
      }
      if (log) {
        *log << "D=" << D << ": c_x=" << fmt(run.fit->errors.c_x)
             << " c_u=" << fmt(run.fit->errors.c_u) << " fill=" << fmt(run.fit->fill.value) << '\n';
      }
      stage = "simulate";
      run.trace = run_closed_loop(*plant, *run.model, mpc, cfg.initial_state(), cfg.steps);
      if (out_dir) {
        write_trace(run.trace, storage, cfg.normalization(), dir / "trace.csv", dir / "trace_raw.csv");
        emit(dir / "trace.csv");
        emit(dir / "trace_raw.csv");
      }
      if (run.trace.failure) {
        throw Error("closed loop stopped at step " + std::to_string(run.trace.failure->step) +
                    ": " + run.trace.failure->message);
      }
      if (cfg.steps > 0) {
        stage = "certify";
        run.cert = certify(*run.model, run.trace, cfg);
        if (out_dir) {
          write_certificate(*run.cert, dir / "stability_report.txt", dir / "stability_steps.csv");
          emit(dir / "stability_report.txt");
          emit(dir / "stability_steps.csv");
        }
        if (log) {
          *log << "D=" << D << ": " << to_string(run.cert->report.verdict)
               << ", terminal error " << fmt(run.cert->report.error.back()) << '\n';
        }
      }
    } catch (const std::exception& e) {
      run.failure = stage + ": " + e.what();
      if (log) *log << "D=" << D << " failed in " << *run.failure << '\n';
    }
    run.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    result.runs.push_back(std::move(run));
  }

  if (out_dir) {
    const fs::path p = *out_dir / "comparison.csv";
    write_csv(p, comparison_table(cfg, result.runs));
    result.outputs.push_back(p);
  }
  return result;
}

}  // namespace narxmpc
