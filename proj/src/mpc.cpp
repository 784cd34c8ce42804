#include "narxmpc/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "narxmpc/stability.hpp"

namespace narxmpc {

namespace {

void require_spd(const Mat& M, const char* name) {
  if (M.rows() != M.cols() || M.rows() == 0) {
    throw ConfigError(std::string(name) + " must be a nonempty square matrix");
  }
  if ((M - M.transpose()).norm() > 1e-12 * std::max(1.0, M.norm())) {
    throw ConfigError(std::string(name) + " must be symmetric");
  }
  const double lmin = Eigen::SelfAdjointEigenSolver<Mat>(M, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  if (!(lmin > 1e-12)) {
    throw ConfigError(std::string(name) + " must be positive definite (smallest eigenvalue " +
                      std::to_string(lmin) + ")");
  }
}

void check_inputs(const NarxDynamics& f, const RegressorState& x0, const InputSequence& inputs) {
  const auto& d = f.dims();
  if (x0.dims() != d) throw DimensionError("x0", "regressor dimensions do not match the dynamics");
  if (inputs.cols() < 1) throw DimensionError("u_seq", "horizon must be at least 1");
  if (inputs.rows() != d.m) {
    throw DimensionError("u_seq", "expected " + std::to_string(d.m) + " rows, got " +
                                      std::to_string(inputs.rows()));
  }
}

// A^T lam for the lifted map, given the output Jacobian jx.
Vec state_adjoint(const Mat& jx, const Vec& lam, const NarxDims& d) {
  const int p = d.p, m = d.m, nu = d.nu;
  Vec r = jx.transpose() * lam.head(p);
  if (nu > 1) {
    r.head((nu - 1) * p) += lam.segment(p, (nu - 1) * p);
    if (nu > 2) r.segment(nu * p, (nu - 2) * m) += lam.segment(nu * p + m, (nu - 2) * m);
  }
  return r;
}

// B^T lam for the lifted map, given the output Jacobian ju.
Vec input_adjoint(const Mat& ju, const Vec& lam, const NarxDims& d) {
  Vec r = ju.transpose() * lam.head(d.p);
  if (d.nu > 1) r += lam.segment(d.nu * d.p, d.m);
  return r;
}

double safe_cost(const NarxDynamics& f, const RegressorState& x0, const InputSequence& u,
                 const StageCostWeights& w) {
  try {
    const double J = cost_J(f, x0, u, w);
    return std::isfinite(J) ? J : std::numeric_limits<double>::infinity();
  } catch (const DimensionError&) {
    throw;
  } catch (const std::exception&) {
    return std::numeric_limits<double>::infinity();
  }
}

InputSequence project_sequence(const InputBox& box, const InputSequence& u) {
  InputSequence out(u.rows(), u.cols());
  for (Eigen::Index k = 0; k < u.cols(); ++k) out.col(k) = box.project(u.col(k));
  return out;
}

std::string describe(const InputSequence& u) {
  std::ostringstream os;
  os.precision(17);
  os << "[";
  for (Eigen::Index k = 0; k < u.size(); ++k) os << (k ? ", " : "") << u.data()[k];
  os << "]";
  return os.str();
}

struct SingleSolve {
  InputSequence u;
  double value;
  double grad_norm;
  int iters;
  bool converged;
};

SingleSolve projected_gradient(const NarxDynamics& f, const RegressorState& x0, const MpcConfig& cfg,
                               InputSequence u) {
  const auto& w = cfg.weights;
  u = project_sequence(cfg.box, u);

  auto evaluate = [&](const InputSequence& v) -> CostAndGradient {
    try {
      auto cg = cost_gradient(f, x0, v, w);
      if (!std::isfinite(cg.value) || !cg.gradient.allFinite()) throw SolverError("non-finite");
      return cg;
    } catch (const DimensionError&) {
      throw;
    } catch (const std::exception& e) {
      throw SolverError(std::string("non-finite cost at iterate ") + describe(v) + " (" + e.what() + ")");
    }
  };

  CostAndGradient cur = evaluate(u);
  auto pg_norm = [&](const InputSequence& v, const InputSequence& g) {
    return (v - project_sequence(cfg.box, v - g)).norm();
  };

  double pgn = pg_norm(u, cur.gradient);
  // First step: unit projected move for large gradients, but never beyond 1
  // (the normalized cost has curvature of order one, and near the origin
  // 1/|g| would overshoot by many orders of magnitude).
  double step = 1.0 / std::max(1.0, (u - project_sequence(cfg.box, u - cur.gradient)).cwiseAbs().maxCoeff());
  int it = 0;
  // Costs scale with ||x0||^2 and gradients with ||x0||, so the tolerance is
  // relative to the start state; the absolute part only matters at x0 = 0.
  const double tol = cfg.grad_tol + cfg.grad_rtol * x0.values().norm();
  bool converged = pgn <= tol;
  constexpr double step_min = 1e-14, step_max = 1e14;
  // Nonmonotone Armijo test against the worst of the last kMemory values, as
  // in SPG; the best iterate seen is returned.
  constexpr std::size_t kMemory = 10;
  std::vector<double> recent{cur.value};
  SingleSolve best{u, cur.value, pgn, 0, converged};

  while (!converged && it < cfg.max_iters) {
    ++it;
    const InputSequence d =
        project_sequence(cfg.box, u - std::clamp(step, step_min, step_max) * cur.gradient) - u;
    if (d.squaredNorm() == 0.0) break;
    const double gd = (cur.gradient.array() * d.array()).sum();
    const double ref = *std::max_element(recent.begin(), recent.end());
    // Roundoff slack on the reference value keeps progress possible once
    // cost differences fall below machine precision.
    const double slack = 4.0 * std::numeric_limits<double>::epsilon() * std::abs(ref);
    double lambda = 1.0;
    bool accepted = false;
    InputSequence trial;
    for (int ls = 0; ls < 30; ++ls) {
      trial = u + lambda * d;
      const double Jt = safe_cost(f, x0, trial, w);
      if (Jt <= ref + cfg.armijo * lambda * gd + slack) {
        accepted = true;
        break;
      }
      // Safeguarded minimizer of the quadratic through J(u), J'(u) d and Jt.
      const double q = -gd * lambda * lambda / (2.0 * (Jt - cur.value - lambda * gd));
      lambda = std::isfinite(q) && q >= 0.1 * lambda && q <= 0.9 * lambda ? q : lambda * cfg.shrink;
    }
    if (!accepted) break;

    CostAndGradient next = evaluate(trial);
    const InputSequence s = trial - u;
    const InputSequence yv = next.gradient - cur.gradient;
    const double sy = (s.array() * yv.array()).sum();
    step = sy > 0.0 ? s.squaredNorm() / sy : step_max;
    u = std::move(trial);
    cur = std::move(next);
    pgn = pg_norm(u, cur.gradient);
    converged = pgn <= tol;
    recent.push_back(cur.value);
    if (recent.size() > kMemory) recent.erase(recent.begin());
    // Stalled at roundoff: the window of recent values has collapsed.
    const auto [lo, hi] = std::minmax_element(recent.begin(), recent.end());
    if (recent.size() == kMemory && *hi - *lo <= 1e-15 * std::abs(*hi)) break;
    if (cur.value <= best.value || converged) best = {u, cur.value, pgn, it, converged};
  }
  best.iters = it;
  return best;
}

}  // namespace

StageCostWeights StageCostWeights::make(Mat Q, Mat R) {
  require_spd(Q, "Q");
  require_spd(R, "R");
  return StageCostWeights{std::move(Q), std::move(R)};
}

InputBox InputBox::make(Vec lo, Vec hi) {
  if (lo.size() != hi.size() || lo.size() == 0) throw ConfigError("input box bounds differ in size");
  if (!(lo.array() <= hi.array()).all()) throw ConfigError("input box requires lo <= hi");
  return InputBox{std::move(lo), std::move(hi)};
}

void MpcConfig::validate(const NarxDims& dims) const {
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (weights.Q.rows() != dims.p || weights.R.rows() != dims.m) {
    throw ConfigError("weight matrices do not match the system dimensions");
  }
  if (box.lo.size() != dims.m) throw ConfigError("input box does not match the input dimension");
  if (!(grad_tol > 0.0)) throw ConfigError("grad_tol must be positive");
  if (!(grad_rtol >= 0.0)) throw ConfigError("grad_rtol must be >= 0");
  if (max_iters < 0) throw ConfigError("max_iters must be >= 0");
  if (!(armijo > 0.0 && armijo < 1.0)) throw ConfigError("armijo constant must lie in (0, 1)");
  if (!(shrink > 0.0 && shrink < 1.0)) throw ConfigError("shrink factor must lie in (0, 1)");
  if (multistart < 1) throw ConfigError("multistart must be >= 1");
}

double stage_cost(const Vec& y, const Vec& u, const StageCostWeights& w) {
  if (y.size() != w.Q.rows()) throw DimensionError("y", "does not match Q");
  if (u.size() != w.R.rows()) throw DimensionError("u", "does not match R");
  return y.dot(w.Q * y) + u.dot(w.R * u);
}

double cost_J(const NarxDynamics& f, const RegressorState& x0, const InputSequence& inputs,
              const StageCostWeights& w) {
  check_inputs(f, x0, inputs);
  const auto& d = f.dims();
  Vec x = x0.values();
  double J = 0.0;
  for (Eigen::Index k = 0; k < inputs.cols(); ++k) {
    const Vec u = inputs.col(k);
    Vec y;
    try {
      y = f.output(x, u);
    } catch (const std::exception& e) {
      throw DynamicsError(e.what(), static_cast<int>(k));
    }
    J += stage_cost(y, u, w);
    x = shift_regressor(x, y, u, d);
  }
  return J;
}

CostAndGradient cost_gradient(const NarxDynamics& f, const RegressorState& x0,
                              const InputSequence& inputs, const StageCostWeights& w) {
  if (!f.differentiable()) throw Error("cost_gradient: dynamics map is not differentiable");
  check_inputs(f, x0, inputs);
  const auto& d = f.dims();
  const Eigen::Index N = inputs.cols();

  std::vector<Vec> xs(N + 1);
  std::vector<Mat> jxs(N), jus(N);
  xs[0] = x0.values();
  CostAndGradient out;
  out.gradient.resize(d.m, N);
  for (Eigen::Index k = 0; k < N; ++k) {
    const Vec u = inputs.col(k);
    Vec y;
    try {
      y = f.output_and_jacobian(xs[k], u, jxs[k], jus[k]);
    } catch (const std::exception& e) {
      throw DynamicsError(e.what(), static_cast<int>(k));
    }
    out.value += stage_cost(y, u, w);
    xs[k + 1] = shift_regressor(xs[k], y, u, d);
  }

  // lam = dJ/dx(k+1), accumulated backwards.
  Vec lam = Vec::Zero(d.n());
  lam.head(d.p) = 2.0 * w.Q * xs[N].head(d.p);
  for (Eigen::Index k = N - 1; k >= 0; --k) {
    out.gradient.col(k) = 2.0 * w.R * inputs.col(k) + input_adjoint(jus[k], lam, d);
    if (k == 0) break;
    Vec prev = state_adjoint(jxs[k], lam, d);
    prev.head(d.p) += 2.0 * w.Q * xs[k].head(d.p);
    lam = std::move(prev);
  }
  return out;
}

OcpSolution solve_ocp(const NarxDynamics& f, const RegressorState& x0, const MpcConfig& cfg,
                      const std::optional<InputSequence>& warm) {
  const auto& d = f.dims();
  cfg.validate(d);
  if (x0.dims() != d) throw DimensionError("x0", "regressor dimensions do not match the dynamics");
  if (!f.differentiable()) throw Error("solve_ocp: dynamics map is not differentiable");

  InputSequence start = InputSequence::Zero(d.m, cfg.horizon);
  if (warm) {
    if (warm->rows() != d.m || warm->cols() != cfg.horizon) {
      throw DimensionError("warm", "warm start must be m x N");
    }
    start = *warm;
  }

  OcpSolution best;
  double worst_value = -std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(cfg.seed);
  for (int s = 0; s < cfg.multistart; ++s) {
    InputSequence u0 = start;
    if (s > 0) {
      for (Eigen::Index k = 0; k < u0.cols(); ++k) {
        for (Eigen::Index i = 0; i < u0.rows(); ++i) {
          std::uniform_real_distribution<double> dist(cfg.box.lo[i], cfg.box.hi[i]);
          u0(i, k) = dist(rng);
        }
      }
    }
    SingleSolve r = projected_gradient(f, x0, cfg, std::move(u0));
    worst_value = std::max(worst_value, r.value);
    if (s == 0 || r.value < best.value) {
      best.inputs = std::move(r.u);
      best.value = r.value;
      best.grad_norm = r.grad_norm;
      best.iters = r.iters;
      best.converged = r.converged;
      best.best_start = s;
    }
  }
  best.multistart_spread = cfg.multistart > 1 ? worst_value - best.value : 0.0;
  return best;
}

std::vector<RegressorState> ClosedLoopTrace::states() const {
  std::vector<RegressorState> out;
  out.reserve(steps.size() + 1);
  for (const auto& s : steps) out.push_back(s.x);
  if (terminal) out.push_back(*terminal);
  return out;
}

ClosedLoopTrace run_closed_loop(const NarxDynamics& plant, const NarxDynamics& surrogate,
                                const MpcConfig& cfg, const RegressorState& x0, int steps) {
  const auto& d = surrogate.dims();
  if (plant.dims() != d) throw DimensionError("plant", "plant and surrogate dimensions differ");
  if (x0.dims() != d) throw DimensionError("x0", "regressor dimensions do not match the dynamics");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  cfg.validate(d);
  const StorageMatrix storage = storage_matrix(d, cfg.weights);

  ClosedLoopTrace trace;
  trace.dims = d;
  trace.steps.reserve(static_cast<std::size_t>(steps));
  RegressorState x = x0;
  std::optional<InputSequence> warm;
  const Vec pad = cfg.box.project(Vec::Zero(d.m));

  for (int k = 0; k < steps; ++k) {
    OcpSolution sol;
    try {
      sol = solve_ocp(surrogate, x, cfg, warm);
    } catch (const std::exception& e) {
      trace.failure = ClosedLoopFailure{k, std::string("solver: ") + e.what()};
      break;
    }
    ClosedLoopStep rec;
    rec.k = k;
    rec.x = x;
    rec.u = sol.inputs.col(0);
    try {
      rec.y = plant.output(x.values(), rec.u);
      if (!rec.y.allFinite()) throw DynamicsError("non-finite plant output");
    } catch (const std::exception& e) {
      trace.failure = ClosedLoopFailure{k, std::string("plant: ") + e.what()};
      break;
    }
    rec.stage_cost = stage_cost(rec.y, rec.u, cfg.weights);
    rec.V = sol.value;
    rec.W = storage_W(x.values(), storage);
    rec.grad_norm = sol.grad_norm;
    rec.iters = sol.iters;
    rec.converged = sol.converged;
    x = RegressorState(shift_regressor(x.values(), rec.y, rec.u, d), d);
    trace.steps.push_back(std::move(rec));

    InputSequence shifted(d.m, cfg.horizon);
    if (cfg.horizon > 1) shifted.leftCols(cfg.horizon - 1) = sol.inputs.rightCols(cfg.horizon - 1);
    shifted.col(cfg.horizon - 1) = pad;
    warm = std::move(shifted);
  }

  trace.terminal = x;
  if (!trace.failure && steps > 0) {
    try {
      trace.terminal_V = solve_ocp(surrogate, x, cfg, warm).value;
    } catch (const std::exception& e) {
      trace.failure = ClosedLoopFailure{steps, std::string("solver: ") + e.what()};
    }
  }
  return trace;
}

}  // namespace narxmpc
