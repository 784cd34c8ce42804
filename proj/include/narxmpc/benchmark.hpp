#pragma once

// End-to-end two-tank pipeline: generate -> fit -> assess -> closed loop ->
// certify, for each configured data-set size.

#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "narxmpc/io.hpp"
#include "narxmpc/kernel.hpp"
#include "narxmpc/mpc.hpp"
#include "narxmpc/stability.hpp"
#include "narxmpc/two_tank.hpp"

namespace narxmpc {

struct FitReport {
  std::size_t D = 0;
  double sigma = 0.0;
  double jitter = 0.0;
  double max_site_residual = 0.0;
  double rkhs_norm = 0.0;
  ErrorConstants errors;
  FillDistance fill;
  int probes_per_axis = 0;
  // Largest sampled difference quotient; a lower bound on the true constant.
  double lipschitz_lower_bound = 0.0;
  // Largest power-function value over the validation samples.
  double max_power = 0.0;
  bool certificate_degraded = false;

  KvList to_key_values() const;
};

// Error constants and fill distance against the true plant on
// cfg.validation_samples pairs drawn from Ω x U.
FitReport assess_fit(const KernelInterpolant& model, const BenchmarkConfig& cfg);

struct Certificate {
  StorageMatrix storage;
  int horizon = 0;
  std::optional<GrowthBoundEstimate> growth;  // empty when growth_states = 0
  std::optional<double> gamma_bar;
  std::optional<double> min_horizon;
  // Sampled sandwich Y <= (gamma_bar + 1) W on the trace states.
  std::size_t sandwich_violations = 0;
  DetectabilityReport detectability;
  std::size_t omega_excursions = 0;
  StabilityReport report;

  bool horizon_sufficient() const { return min_horizon && horizon > *min_horizon; }
};

// terminal_V is recomputed on the surrogate when the trace lacks it.
// Throws Error for a trace without steps.
Certificate certify(const NarxDynamics& surrogate, ClosedLoopTrace trace,
                    const BenchmarkConfig& cfg);

// Key=value report and the per-step CSV (k, Y, W, delta, err).
void write_certificate(const Certificate& cert, const fs::path& report, const fs::path& steps_csv);

struct BenchmarkRun {
  int D = 0;
  std::shared_ptr<const KernelInterpolant> model;
  std::optional<FitReport> fit;
  ClosedLoopTrace trace;
  std::optional<Certificate> cert;
  std::optional<std::string> failure;
  double seconds = 0.0;
};

struct BenchmarkResult {
  std::vector<BenchmarkRun> runs;
  std::vector<fs::path> outputs;

  bool any_failure() const;
  bool any_verdict_failure() const;
};

// Runs every D in cfg.D_values. A failing stage ends that run only. With an
// output directory, per-D artifacts go to out/D<D>/ and the comparison CSV to
// out/comparison.csv.
BenchmarkResult run_benchmark(const BenchmarkConfig& cfg,
                              const std::optional<fs::path>& out_dir = std::nullopt,
                              std::ostream* log = nullptr);

// Columns k, y_D<D>..., err_D<D>... with y in metres and err = ||x(k) - x_bar||
// in normalized coordinates; rows k = 0..steps.
CsvTable comparison_table(const BenchmarkConfig& cfg, const std::vector<BenchmarkRun>& runs);

}  // namespace narxmpc
