#pragma once

// Stability certificates for output-weighted MPC on NARX models.
//
// Storage function W(x) = ||x||_P^2 with the block-diagonal
//   P = diag(Q, (nu-1)/nu Q, ..., 1/nu Q, R, (nu-1)/nu R, ..., 2/nu R)
// gives the detectability inequality W(x+) <= eta W(x) + l(y+, u) with
// eta = (nu-1)/nu for any map in NARX form. The candidate Lyapunov function
// is Y = V_N + W.

#include <string>
#include <vector>

#include "narxmpc/mpc.hpp"

namespace narxmpc {

struct StorageMatrix {
  Mat P;
  NarxDims dims;
  StageCostWeights weights;
  double sigma_min = 0.0;  // smallest eigenvalue of P

  double eta() const { return static_cast<double>(dims.nu - 1) / dims.nu; }
};

StorageMatrix storage_matrix(const NarxDims& dims, const StageCostWeights& weights);

double storage_W(const Vec& x, const StorageMatrix& storage);

// The same quantity written as the weighted sum over the past outputs and inputs.
double storage_W_history(const Vec& x, const NarxDims& dims, const StageCostWeights& weights);

struct DetectabilityReport {
  std::size_t samples = 0;
  double max_violation = 0.0;  // max of W(x+) - eta W(x) - l(y+, u)
  std::size_t worst_sample = 0;
  bool passed = true;
};

DetectabilityReport check_detectability(const NarxDynamics& f, const StorageMatrix& storage,
                                        std::span<const StateInputSample> samples,
                                        double tol = 1e-10);

struct GrowthBoundEstimate {
  std::string model_tag;
  std::vector<double> B;                    // B[N-1], nondecreasing
  std::vector<std::vector<double>> ratios;  // ratios[N-1][state] = V_N / ||x||^2, NaN on failure
  std::vector<Vec> states;
  std::size_t solver_failures = 0;
  std::size_t unconverged = 0;

  double max_B() const;
};

// V_N(x)/||x||^2 for every sample state and horizon N = 1..max_horizon;
// B_N is the max over states followed by a cumulative max over N.
GrowthBoundEstimate estimate_growth_bound(const NarxDynamics& f, const MpcConfig& cfg,
                                          std::span<const Vec> states, int max_horizon,
                                          std::string model_tag);

// 1 + (log g - log(1/nu)) / (log(1+g) - log(g+eta)). Throws Error for g <= 0.
double min_horizon(double gamma_bar, int nu);

// max_N B_N / sigma_min(P).
double gamma_bar(const GrowthBoundEstimate& growth, const StorageMatrix& storage);

double lyapunov_Y(const NarxDynamics& surrogate, const MpcConfig& cfg, const RegressorState& x,
                  const StorageMatrix& storage);

enum class DecreaseVerdict { at_equilibrium, exponential_decrease_verified, decrease_violated };

std::string to_string(DecreaseVerdict v);

struct DecreaseOptions {
  double dead_band = 1e-5;
  // Verified iff the uniform rate exceeds margin_fraction * sigma_min(P).
  double margin_fraction = 0.0;
};

struct StabilityReport {
  Mat P;
  double eta = 0.0;
  double sigma_min = 0.0;
  std::vector<double> Y;       // Y(x(k)), k = 0..S
  std::vector<double> W;       // W(x(k))
  std::vector<double> delta;   // Y(x(k+1)) - Y(x(k)), k = 0..S-1
  std::vector<double> error;   // ||x(k)||, k = 0..S (normalized, target at 0)
  std::vector<bool> active;    // ||x(k)|| > dead_band
  double alpha_bar = 0.0;      // min over active k of -delta(k) / ||x(k)||^2
  int first_violation = -1;    // first active k with delta(k) > 0
  int active_steps = 0;
  double decay_rate = 0.0;     // slope of log ||x(k)|| over the transient
  double decay_r2 = 0.0;
  DecreaseVerdict verdict = DecreaseVerdict::at_equilibrium;
};

// Needs the trace's recorded V values and terminal V.
StabilityReport verify_decrease(const ClosedLoopTrace& trace, const StorageMatrix& storage,
                                const DecreaseOptions& options = {});

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LinearFit fit_line(std::span<const double> t, std::span<const double> v);

}  // namespace narxmpc
