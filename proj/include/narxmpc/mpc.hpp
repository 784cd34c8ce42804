#pragma once

// Output-weighted MPC without terminal ingredients.
//
//   J_N(x, u) = sum_{k=0}^{N-1} ||y(k+1)||_Q^2 + ||u(k)||_R^2
//   V_N(x)    = min_{u(i) in U} J_N(x, u)
//
// The OCP is solved by spectral projected gradient descent on the input box
// with an Armijo backtracking line search. Gradients come from a discrete
// adjoint sweep through the lifted dynamics.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "narxmpc/narx.hpp"

namespace narxmpc {

struct StageCostWeights {
  Mat Q;  // p x p
  Mat R;  // m x m

  // Throws ConfigError unless Q and R are symmetric with smallest eigenvalue > 1e-12.
  static StageCostWeights make(Mat Q, Mat R);
  static StageCostWeights scalar(double q, double r) {
    return make(Mat::Constant(1, 1, q), Mat::Constant(1, 1, r));
  }
};

struct InputBox {
  Vec lo, hi;

  // Throws ConfigError unless lo <= hi componentwise.
  static InputBox make(Vec lo, Vec hi);
  Vec project(const Vec& u) const { return u.cwiseMax(lo).cwiseMin(hi); }
  bool contains(const Vec& u) const {
    return (u.array() >= lo.array()).all() && (u.array() <= hi.array()).all();
  }
};

struct MpcConfig {
  int horizon = 20;
  StageCostWeights weights = StageCostWeights::scalar(1.0, 0.1);
  InputBox box;
  // Stop when the projected-gradient norm is below grad_tol + grad_rtol ||x0||.
  double grad_tol = 1e-16;
  double grad_rtol = 1e-8;
  int max_iters = 500;
  double armijo = 1e-4;
  double shrink = 0.5;
  // Number of starts; start 0 is the warm start (or zeros), the rest are
  // random feasible sequences drawn from `seed`.
  int multistart = 1;
  std::uint64_t seed = 0;

  void validate(const NarxDims& dims) const;
};

// An input sequence u(0..N-1), stored column-wise (m x N).
using InputSequence = Mat;

double stage_cost(const Vec& y, const Vec& u, const StageCostWeights& w);

double cost_J(const NarxDynamics& f, const RegressorState& x0, const InputSequence& inputs,
              const StageCostWeights& w);

struct CostAndGradient {
  double value = 0.0;
  InputSequence gradient;  // m x N
};

// Requires f.differentiable(); throws Error otherwise.
CostAndGradient cost_gradient(const NarxDynamics& f, const RegressorState& x0,
                              const InputSequence& inputs, const StageCostWeights& w);

struct OcpSolution {
  InputSequence inputs;
  double value = 0.0;
  double grad_norm = 0.0;  // projected-gradient norm at the returned point
  int iters = 0;
  bool converged = false;
  // Max minus min value over multistart candidates (0 for a single start).
  double multistart_spread = 0.0;
  int best_start = 0;
};

// Throws SolverError if the cost is non-finite at a start point.
OcpSolution solve_ocp(const NarxDynamics& f, const RegressorState& x0, const MpcConfig& cfg,
                      const std::optional<InputSequence>& warm = std::nullopt);

struct ClosedLoopStep {
  int k = 0;
  RegressorState x;  // measured regressor x(k)
  Vec u;             // applied input u(k)
  Vec y;             // resulting output y(k+1)
  double stage_cost = 0.0;  // l(y(k+1), u(k))
  double V = 0.0;           // V_N(x(k)) on the surrogate
  double W = 0.0;           // storage W(x(k))
  double grad_norm = 0.0;
  int iters = 0;
  bool converged = false;
};

struct ClosedLoopFailure {
  int step = 0;
  std::string message;
};

struct ClosedLoopTrace {
  NarxDims dims;
  std::vector<ClosedLoopStep> steps;
  // Regressor after the last applied input, x(steps.size()).
  std::optional<RegressorState> terminal;
  // V_N at the terminal regressor (solved but not applied).
  std::optional<double> terminal_V;
  std::optional<ClosedLoopFailure> failure;

  // x(0..S) including the terminal state.
  std::vector<RegressorState> states() const;
};

// Receding-horizon loop: solve on the surrogate from the measured regressor,
// apply u*(0) to the plant, shift the measured output into the regressor and
// warm-start the next solve with the shifted sequence padded by zeros.
ClosedLoopTrace run_closed_loop(const NarxDynamics& plant, const NarxDynamics& surrogate,
                                const MpcConfig& cfg, const RegressorState& x0, int steps);

}  // namespace narxmpc
