#include "narxmpc/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace narxmpc {

namespace {

double min_eigenvalue(const Mat& M) {
  return Eigen::SelfAdjointEigenSolver<Mat>(M, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

}  // namespace

StorageMatrix storage_matrix(const NarxDims& dims, const StageCostWeights& weights) {
  const int p = dims.p, m = dims.m, nu = dims.nu;
  if (weights.Q.rows() != p || weights.R.rows() != m) {
    throw DimensionError("weights", "Q/R do not match the system dimensions");
  }
  StorageMatrix s{Mat::Zero(dims.n(), dims.n()), dims, weights, 0.0};
  const double qmin = min_eigenvalue(weights.Q), rmin = min_eigenvalue(weights.R);
  double sigma = std::numeric_limits<double>::infinity();
  for (int k = 0; k < nu; ++k) {
    const double c = static_cast<double>(nu - k) / nu;
    s.P.block(k * p, k * p, p, p) = c * weights.Q;
    sigma = std::min(sigma, c * qmin);
  }
  for (int k = 1; k < nu; ++k) {
    const double c = static_cast<double>(nu - k + 1) / nu;
    const int off = nu * p + (k - 1) * m;
    s.P.block(off, off, m, m) = c * weights.R;
    sigma = std::min(sigma, c * rmin);
  }
  s.sigma_min = sigma;
  return s;
}

double storage_W(const Vec& x, const StorageMatrix& storage) {
  if (x.size() != storage.P.rows()) throw DimensionError("x", "does not match the storage matrix");
  return x.dot(storage.P * x);
}

double storage_W_history(const Vec& x, const NarxDims& dims, const StageCostWeights& weights) {
  if (x.size() != dims.n()) throw DimensionError("x", "does not match the dimensions");
  const int p = dims.p, m = dims.m, nu = dims.nu;
  double W = 0.0;
  for (int k = 0; k < nu; ++k) {
    const Vec y = x.segment(k * p, p);
    W += static_cast<double>(nu - k) / nu * y.dot(weights.Q * y);
  }
  for (int k = 1; k < nu; ++k) {
    const Vec u = x.segment(nu * p + (k - 1) * m, m);
    W += static_cast<double>(nu - k + 1) / nu * u.dot(weights.R * u);
  }
  return W;
}

DetectabilityReport check_detectability(const NarxDynamics& f, const StorageMatrix& storage,
                                        std::span<const StateInputSample> samples, double tol) {
  const auto& d = f.dims();
  if (storage.dims != d) throw DimensionError("storage", "does not match the dynamics");
  DetectabilityReport rep;
  rep.samples = samples.size();
  rep.max_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const Vec y = f.output(s.x, s.u);
    const Vec xn = shift_regressor(s.x, y, s.u, d);
    const double v = storage_W(xn, storage) - storage.eta() * storage_W(s.x, storage) -
                     stage_cost(y, s.u, storage.weights);
    if (v > rep.max_violation) {
      rep.max_violation = v;
      rep.worst_sample = i;
    }
  }
  rep.passed = rep.max_violation <= tol;
  return rep;
}

double GrowthBoundEstimate::max_B() const {
  return B.empty() ? 0.0 : *std::max_element(B.begin(), B.end());
}

GrowthBoundEstimate estimate_growth_bound(const NarxDynamics& f, const MpcConfig& cfg,
                                          std::span<const Vec> states, int max_horizon,
                                          std::string model_tag) {
  if (max_horizon < 1) throw ConfigError("max_horizon must be >= 1");
  if (states.empty()) throw Error("estimate_growth_bound: no sample states");
  const auto& d = f.dims();
  GrowthBoundEstimate est;
  est.model_tag = std::move(model_tag);
  est.states.assign(states.begin(), states.end());
  est.B.assign(static_cast<std::size_t>(max_horizon), 0.0);
  est.ratios.assign(static_cast<std::size_t>(max_horizon),
                    std::vector<double>(states.size(), std::numeric_limits<double>::quiet_NaN()));

  for (std::size_t j = 0; j < states.size(); ++j) {
    const RegressorState x(states[j], d);
    const double nx2 = states[j].squaredNorm();
    if (!(nx2 > 0.0)) throw Error("estimate_growth_bound: sample state at the origin");
    std::optional<InputSequence> warm;
    for (int N = 1; N <= max_horizon; ++N) {
      MpcConfig c = cfg;
      c.horizon = N;
      if (warm) {
        InputSequence w(d.m, N);
        w.leftCols(N - 1) = *warm;
        w.col(N - 1) = cfg.box.project(Vec::Zero(d.m));
        warm = std::move(w);
      }
      try {
        const OcpSolution sol = solve_ocp(f, x, c, warm);
        est.ratios[N - 1][j] = sol.value / nx2;
        if (!sol.converged) ++est.unconverged;
        warm = sol.inputs;
      } catch (const std::exception&) {
        ++est.solver_failures;
        warm.reset();
      }
    }
  }

  double running = 0.0;
  for (int N = 1; N <= max_horizon; ++N) {
    double b = 0.0;
    for (const double r : est.ratios[N - 1]) {
      if (std::isfinite(r)) b = std::max(b, r);
    }
    running = std::max(running, b);
    est.B[N - 1] = running;
  }
  return est;
}

double min_horizon(double gamma_bar, int nu) {
  if (!(gamma_bar > 0.0)) throw Error("min_horizon: gamma_bar must be positive");
  if (nu < 1) throw Error("min_horizon: lag must be >= 1");
  const double eta = static_cast<double>(nu - 1) / nu;
  const double num = std::log(gamma_bar) - std::log(1.0 / nu);
  const double den = std::log1p(gamma_bar) - std::log(gamma_bar + eta);
  return 1.0 + num / den;
}

double gamma_bar(const GrowthBoundEstimate& growth, const StorageMatrix& storage) {
  if (growth.B.empty()) throw Error("gamma_bar: empty growth-bound estimate");
  return growth.max_B() / storage.sigma_min;
}

double lyapunov_Y(const NarxDynamics& surrogate, const MpcConfig& cfg, const RegressorState& x,
                  const StorageMatrix& storage) {
  return solve_ocp(surrogate, x, cfg).value + storage_W(x.values(), storage);
}

std::string to_string(DecreaseVerdict v) {
  switch (v) {
    case DecreaseVerdict::at_equilibrium:
      return "at equilibrium";
    case DecreaseVerdict::exponential_decrease_verified:
      return "exponential decrease verified";
    case DecreaseVerdict::decrease_violated:
      return "decrease violated";
  }
  return "unknown";
}

LinearFit fit_line(std::span<const double> t, std::span<const double> v) {
  LinearFit fit;
  const std::size_t n = std::min(t.size(), v.size());
  if (n < 2) return fit;
  double mt = 0.0, mv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mt += t[i];
    mv += v[i];
  }
  mt /= n;
  mv /= n;
  double stt = 0.0, stv = 0.0, svv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    stt += (t[i] - mt) * (t[i] - mt);
    stv += (t[i] - mt) * (v[i] - mv);
    svv += (v[i] - mv) * (v[i] - mv);
  }
  if (stt == 0.0) return fit;
  fit.slope = stv / stt;
  fit.intercept = mv - fit.slope * mt;
  const double ss_res = svv - fit.slope * stv;
  fit.r2 = svv > 0.0 ? 1.0 - std::max(0.0, ss_res) / svv : 1.0;
  return fit;
}

StabilityReport verify_decrease(const ClosedLoopTrace& trace, const StorageMatrix& storage,
                                const DecreaseOptions& options) {
  if (storage.dims != trace.dims) throw DimensionError("storage", "does not match the trace");
  StabilityReport rep;
  rep.P = storage.P;
  rep.eta = storage.eta();
  rep.sigma_min = storage.sigma_min;

  const auto states = trace.states();
  std::vector<double> V;
  for (const auto& s : trace.steps) V.push_back(s.V);
  if (trace.terminal_V) V.push_back(*trace.terminal_V);

  for (std::size_t k = 0; k < states.size(); ++k) {
    const double w = storage_W(states[k].values(), storage);
    rep.W.push_back(w);
    rep.error.push_back(states[k].values().norm());
    rep.active.push_back(rep.error.back() > options.dead_band);
    if (k < V.size()) rep.Y.push_back(V[k] + w);
  }
  for (std::size_t k = 0; k + 1 < rep.Y.size(); ++k) rep.delta.push_back(rep.Y[k + 1] - rep.Y[k]);

  const double required = options.margin_fraction * storage.sigma_min;
  rep.alpha_bar = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < rep.delta.size(); ++k) {
    if (!rep.active[k]) continue;
    ++rep.active_steps;
    const double rate = -rep.delta[k] / (rep.error[k] * rep.error[k]);
    rep.alpha_bar = std::min(rep.alpha_bar, rate);
    if (rep.first_violation < 0 && !(rate > required)) rep.first_violation = static_cast<int>(k);
  }
  if (rep.active_steps == 0) {
    rep.alpha_bar = 0.0;
    rep.verdict = DecreaseVerdict::at_equilibrium;
  } else {
    rep.verdict = rep.first_violation < 0 ? DecreaseVerdict::exponential_decrease_verified
                                          : DecreaseVerdict::decrease_violated;
  }

  std::vector<double> ks, logs;
  for (std::size_t k = 0; k < rep.error.size(); ++k) {
    if (rep.active[k]) {
      ks.push_back(static_cast<double>(k));
      logs.push_back(std::log(rep.error[k]));
    }
  }
  const LinearFit fit = fit_line(ks, logs);
  rep.decay_rate = fit.slope;
  rep.decay_r2 = fit.r2;
  return rep;
}

}  // namespace narxmpc
