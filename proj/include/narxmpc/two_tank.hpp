#pragma once

// Two-tank benchmark plant.
//
//   dh1/dt = c12 sqrt(h2 - h1) - c2 sqrt(h1)
//   dh2/dt = u / A1 - c12 sqrt(h2 - h1)
//
// with output y = h1, integrated by one classical RK4 step per sample with the
// input held constant. The c2 term drains tank 1; with that sign the reference
// levels (0.0438, 0.09) balance at the reference inflow.

#include <cstdint>
#include <exception>
#include <string>
#include <vector>

#include "narxmpc/kernel.hpp"
#include "narxmpc/mpc.hpp"
#include "narxmpc/narx.hpp"

namespace narxmpc {

struct TwoTankParams {
  double A1 = 0.001;
  double c12 = 0.0254;
  double c2 = 0.0261;
  double dt = 10.0;

  void validate() const;
  // Inflow holding tank 1 at level h1 in steady state.
  double equilibrium_input(double h1) const;
  // Tank-2 level in steady state for tank-1 level h1.
  double equilibrium_h2(double h1) const;
};

struct PhysicalState {
  double h1 = 0.0;
  double h2 = 0.0;
};

struct TankRates {
  double dh1 = 0.0;
  double dh2 = 0.0;
};

// Throws DynamicsError if h1 < 0 or h2 < h1.
TankRates two_tank_rhs(const PhysicalState& s, double u, const TwoTankParams& params);

// One classical RK4 step of ds/dt = rhs(s). Exceptions thrown by rhs are
// rethrown as DynamicsError naming the stage (1-4).
template <typename State, typename Rhs>
State rk4_step(Rhs&& rhs, const State& s, double dt) {
  auto stage = [&](int i, const State& at) -> State {
    try {
      return rhs(at);
    } catch (const std::exception& e) {
      throw DynamicsError("RK4 stage " + std::to_string(i) + ": " + e.what());
    }
  };
  const State k1 = stage(1, s);
  const State k2 = stage(2, s + (0.5 * dt) * k1);
  const State k3 = stage(3, s + (0.5 * dt) * k2);
  const State k4 = stage(4, s + dt * k3);
  return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

PhysicalState two_tank_step(const PhysicalState& s, double u, const TwoTankParams& params);

// Hidden-state simulator: advances (h1, h2) and exposes only y = h1.
class TwoTankSimulator {
 public:
  TwoTankSimulator(TwoTankParams params, PhysicalState initial);

  const PhysicalState& state() const noexcept { return state_; }
  double output() const noexcept { return state_.h1; }
  // Applies u for one sample period and returns the new output.
  double step(double u);

 private:
  TwoTankParams params_;
  PhysicalState state_;
};

// The plant as a map of the raw-unit regressor [y(k); y(k-1); ...; u(k-1); ...].
// The hidden level h2(k) is recovered from the two newest outputs and u(k-1)
// by inverting one RK4 step in h2(k-1) (the step is increasing in h2).
class TwoTankNarx final : public NarxDynamics {
 public:
  explicit TwoTankNarx(TwoTankParams params, int nu = 2);

  const NarxDims& dims() const override { return dims_; }
  Vec output(const Vec& x, const Vec& u) const override;

  // Physical state at time k consistent with the regressor x(k).
  // Throws DynamicsError if no h2(k-1) >= y(k-1) reproduces y(k).
  PhysicalState recover_state(const Vec& x) const;

  const TwoTankParams& params() const noexcept { return params_; }

 private:
  TwoTankParams params_;
  NarxDims dims_;
};

enum class SamplingMode { trajectory, state_grid };

std::string to_string(SamplingMode mode);
SamplingMode parse_sampling_mode(const std::string& s);

struct BenchmarkConfig {
  std::vector<int> D_values{101, 2501};
  int N = 20;
  double Q = 1.0;
  double R = 0.1;
  int nu = 2;
  int steps = 100;
  std::uint64_t seed = 0;
  double u_lo = 3.16e-6;
  double u_hi = 4.76e-5;
  double dt = 10.0;
  SamplingMode mode = SamplingMode::trajectory;
  // Kernel lengthscale in normalized coordinates. The site box has diameter
  // about 2, so 3 gives every kernel global support.
  double sigma = 3.0;
  double jitter = 0.0;
  // Reference tank-1 level and the upper level of Ω = [0, h_max]^nu x U^(nu-1).
  double h1_ref = 0.0438;
  double h_max = 0.5;
  // Closed-loop start: both tanks' recent outputs at this level, u(k-1) at the reference.
  double x0_level = 0.2;
  // Certification sampling.
  int growth_states = 200;  // 0 skips the growth-bound table
  int growth_horizon = 0;  // 0: use N
  int validation_samples = 1000;

  void validate() const;
  TwoTankParams params() const;
  NarxDims dims() const;
  // Equilibrium inflow for h1_ref, A1 c2 sqrt(h1_ref).
  double u_ref() const;
  AffineNormalization normalization() const;
  MpcConfig mpc_config() const;
  // Ω in normalized coordinates.
  DomainBox omega() const;
  // Ω × U in normalized coordinates.
  DomainBox site_box() const;
  // Normalized x(0).
  RegressorState initial_state() const;
};

// Reference value quoted for the equilibrium inflow; u_ref() differs from it by
// rounding only.
inline constexpr double kQuotedEquilibriumInput = 5.461e-6;
inline constexpr double kQuotedEquilibriumH2 = 0.09;

// The true plant in normalized coordinates, with finite-difference Jacobians.
DynamicsPtr make_normalized_plant(const BenchmarkConfig& cfg);

// Normalized data set whose first row is the equilibrium sample (the origin
// with zero target).
Dataset generate_dataset(SamplingMode mode, const BenchmarkConfig& cfg, int D);

// Physically consistent normalized (x, u) pairs with x in Ω, drawn with the
// given seed; used for validation of error bounds and detectability.
std::vector<StateInputSample> sample_state_input_pairs(const BenchmarkConfig& cfg, int count,
                                                       std::uint64_t seed);

// Quasi-uniform physically consistent normalized regressors in Ω with
// ||x|| > min_norm.
std::vector<Vec> sample_regressors(const BenchmarkConfig& cfg, int count, double min_norm,
                                   std::uint64_t seed = 0);

}  // namespace narxmpc
