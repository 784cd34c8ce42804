// Acceptance checks for the two-tank reproduction and the property suites.
// Prints one PASS/FAIL line per criterion; exits nonzero if any fails.
//
//   acceptance [--known-red 1,7]
//
// Criteria listed after --known-red still print FAIL, but only an unlisted
// failure (or a listed criterion that now passes) makes the exit code nonzero.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <set>
#include <string>

#include "narxmpc/benchmark.hpp"

using namespace narxmpc;

namespace {

int failures = 0;
int unexpected = 0;
std::set<int> known_red;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %2d %s: %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
  if (ok == known_red.contains(id)) ++unexpected;
}

// Runs a criterion, turning exceptions into failures.
void criterion(int id, const std::string& name, const std::function<bool(std::ostringstream&)>& body) {
  std::ostringstream detail;
  detail.precision(4);
  bool ok = false;
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    detail << "exception: " << e.what();
  }
  report(id, name, ok, detail.str());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vec uniform_in(const DomainBox& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Vec v(box.lo.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = box.lo[i] + U(rng) * (box.hi[i] - box.lo[i]);
  return v;
}

Mat random_inputs(const InputBox& box, int N, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Mat u(box.lo.size(), N);
  for (int k = 0; k < N; ++k) {
    for (Eigen::Index i = 0; i < u.rows(); ++i) u(i, k) = box.lo[i] + U(rng) * (box.hi[i] - box.lo[i]);
  }
  return u;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) != "--known-red") continue;
    std::istringstream ids(argv[++i]);
    for (std::string id; std::getline(ids, id, ',');) known_red.insert(std::stoi(id));
  }
  BenchmarkConfig cfg;  // published benchmark parameters
  cfg.growth_states = 0;  // growth bounds are checked separately below

  const auto t0 = std::chrono::steady_clock::now();
  const BenchmarkResult bench = run_benchmark(cfg);
  const double bench_seconds = seconds_since(t0);
  const BenchmarkRun* small = nullptr;
  const BenchmarkRun* large = nullptr;
  for (const auto& r : bench.runs) {
    if (r.D == 101) small = &r;
    if (r.D == 2501) large = &r;
  }
  const bool complete = small && large && !small->failure && !large->failure && small->cert &&
                        large->cert;
  if (!complete) {
    for (const auto& r : bench.runs) {
      if (r.failure) std::printf("benchmark D=%d failed: %s\n", r.D, r.failure->c_str());
    }
  }
  const DynamicsPtr plant = make_normalized_plant(cfg);
  const MpcConfig mpc = cfg.mpc_config();
  const StorageMatrix storage = storage_matrix(cfg.dims(), mpc.weights);

  criterion(1, "benchmark reproduction", [&](auto& d) {
    if (!complete) return false;
    bool ok = bench_seconds <= 600.0;
    for (const BenchmarkRun* r : {small, large}) {
      const auto& e = r->cert->report.error;
      const double ratio = e.back() / e.front();
      const double r2 = r->cert->report.decay_r2;
      d << "D=" << r->D << " err(100)/err(0)=" << ratio << " R2=" << r2 << "; ";
      ok = ok && e.size() == 101 && ratio < 0.05 && r2 >= 0.8;
    }
    const double e_small = small->cert->report.error.back();
    const double e_large = large->cert->report.error.back();
    d << "terminal " << e_large << " (2501) vs " << e_small << " (101); " << bench_seconds << " s";
    return ok && e_large < e_small;
  });

  criterion(2, "detectability inequality", [&](auto& d) {
    if (!complete) return false;
    const auto physical = sample_state_input_pairs(cfg, 10000, 2024);
    std::mt19937_64 rng(77);
    std::vector<StateInputSample> box_samples;
    const DomainBox omega = cfg.omega();
    for (int i = 0; i < 10000; ++i) {
      box_samples.push_back({uniform_in(omega, rng), random_inputs(mpc.box, 1, rng).col(0)});
    }
    const auto r_plant = check_detectability(*plant, storage, physical);
    const auto r_small = check_detectability(*small->model, storage, box_samples);
    const auto r_large = check_detectability(*large->model, storage, box_samples);
    d << "max violation plant " << r_plant.max_violation << ", D=101 " << r_small.max_violation
      << ", D=2501 " << r_large.max_violation << " over 10000 samples each";
    return r_plant.passed && r_small.passed && r_large.passed && r_plant.samples == 10000 &&
           r_small.samples == 10000;
  });

  criterion(3, "kernel certificate soundness", [&](auto& d) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    const int dim = 4;
    const auto dims = NarxDims::make(1, 1, 2);
    auto point = [&] { return Vec(Vec::NullaryExpr(dim, [&] { return U(rng); })); };
    double worst = -1e300;
    for (int fn = 0; fn < 20; ++fn) {
      const double sigma = 0.8 + 0.1 * fn;
      const KernelSpec spec = KernelSpec::wendland(dim, sigma);
      // f = sum_j beta_j k(., z_j) has ||f||_H^2 = beta^T K_z beta.
      const int M = 5 + fn % 7;
      std::vector<Vec> z;
      Vec beta(M);
      for (int j = 0; j < M; ++j) {
        z.push_back(point());
        beta[j] = U(rng);
      }
      Mat Kz(M, M);
      for (int i = 0; i < M; ++i) {
        for (int j = 0; j < M; ++j) Kz(i, j) = kernel_eval(spec, z[i], z[j]);
      }
      const double norm = std::sqrt(beta.dot(Kz * beta));
      auto f = [&](const Vec& x) {
        double s = 0.0;
        for (int j = 0; j < M; ++j) s += beta[j] * kernel_eval(spec, x, z[j]);
        return s;
      };
      const int D = 40 + 20 * fn;
      Dataset data;
      data.dims = dims;
      data.sites.resize(D, dim);
      data.targets.resize(D, 1);
      for (int i = 0; i < D; ++i) {
        const Vec x = point();
        data.sites.row(i) = x.transpose();
        data.targets(i, 0) = f(x);
      }
      data.normalization = AffineNormalization::identity(dims);
      const KernelInterpolant s = fit_interpolant(spec, data);
      for (int p = 0; p < 1000; ++p) {
        const Vec x = point();
        const double err = std::abs(f(x) - s.predict(x)[0]);
        worst = std::max(worst, err - s.power_function(x).value * norm);
      }
    }
    d << "max(error - P*norm) = " << worst << " over 20 functions x 1000 probes";
    return worst <= 1e-9;
  });

  criterion(4, "interpolation exactness", [&](auto& d) {
    if (!complete) return false;
    const double rs = small->model->max_site_residual();
    const double rl = large->model->max_site_residual();
    d << "max site residual D=101 " << rs << ", D=2501 " << rl << " (jitter "
      << large->model->jitter() << ")";
    return rs <= 1e-8 && rl <= 1e-8;
  });

  criterion(5, "adjoint gradient", [&](auto& d) {
    if (!complete) return false;
    std::mt19937_64 rng(9);
    const DomainBox omega = cfg.omega();
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const KernelInterpolant& m = trial % 2 ? *large->model : *small->model;
      const RegressorState x0(uniform_in(omega, rng), cfg.dims());
      const Mat u = random_inputs(mpc.box, mpc.horizon, rng);
      const auto g = cost_gradient(m, x0, u, mpc.weights);
      Mat fd(u.rows(), u.cols());
      const double h = 1e-6;
      for (Eigen::Index k = 0; k < u.cols(); ++k) {
        Mat a = u, b = u;
        a(0, k) += h;
        b(0, k) -= h;
        fd(0, k) = (cost_J(m, x0, a, mpc.weights) - cost_J(m, x0, b, mpc.weights)) / (2 * h);
      }
      worst = std::max(worst, (g.gradient - fd).norm() / std::max(fd.norm(), 1e-12));
    }
    d << "max relative deviation " << worst << " over 50 instances";
    return worst <= 1e-4;
  });

  criterion(6, "optimality upper bound", [&](auto& d) {
    if (!complete) return false;
    std::mt19937_64 rng(13);
    const auto states = sample_regressors(cfg, 20, 1e-3, 6);
    double worst = -1e300;
    int comparisons = 0;
    for (std::size_t i = 0; i < states.size(); ++i) {
      const KernelInterpolant& m = i % 2 ? *large->model : *small->model;
      const RegressorState x0(states[i], cfg.dims());
      const double V = solve_ocp(m, x0, mpc).value;
      for (int j = 0; j < 100; ++j) {
        worst = std::max(worst, V - cost_J(m, x0, random_inputs(mpc.box, mpc.horizon, rng), mpc.weights));
        ++comparisons;
      }
    }
    d << "max(V - J) = " << worst << " over " << comparisons << " sequences";
    return comparisons == 2000 && worst <= 1e-8;
  });

  criterion(7, "growth-bound convergence", [&](auto& d) {
    if (!complete) return false;
    const int horizon = 10;
    const auto states = sample_regressors(cfg, 50, 1e-3);
    const auto truth = estimate_growth_bound(*plant, mpc, states, horizon, "plant");
    const auto gs = estimate_growth_bound(*small->model, mpc, states, horizon, "D=101");
    const auto gl = estimate_growth_bound(*large->model, mpc, states, horizon, "D=2501");
    double gap_s = 0.0, gap_l = 0.0;
    for (int N = 0; N < horizon; ++N) {
      gap_s = std::max(gap_s, std::abs(gs.B[N] - truth.B[N]));
      gap_l = std::max(gap_l, std::abs(gl.B[N] - truth.B[N]));
    }
    d << "max_N |B_eps - B|: D=101 " << gap_s << ", D=2501 " << gap_l << " (B_10 = "
      << truth.B.back() << ")";
    return states.size() == 50 && gap_l < gap_s;
  });

  criterion(8, "horizon formula", [&](auto& d) {
    const double hand = 1.0 + (std::log(10.0) - std::log(0.5)) / (std::log(11.0) - std::log(10.5));
    const double v = min_horizon(10.0, 2);
    bool increasing = true;
    double prev = min_horizon(0.5, 2);
    for (int i = 1; i <= 200; ++i) {
      const double g = 0.5 + 0.25 * i;
      const double next = min_horizon(g, 2);
      increasing = increasing && next > prev;
      prev = next;
    }
    d.precision(12);
    d << "N(10, 2) = " << v << ", N(1/2, 2) = " << min_horizon(0.5, 2)
      << ", increasing on 200 points: " << (increasing ? "yes" : "no");
    return std::abs(v - hand) <= 1e-9 && std::abs(min_horizon(0.5, 2) - 1.0) <= 1e-12 && increasing;
  });

  criterion(9, "equilibrium consistency", [&](auto& d) {
    if (!complete) return false;
    const TankRates r = two_tank_rhs({cfg.h1_ref, kQuotedEquilibriumH2}, kQuotedEquilibriumInput,
                                     cfg.params());
    const double rhs = std::hypot(r.dh1, r.dh2);
    const ClosedLoopTrace t =
        run_closed_loop(*plant, *large->model, mpc, RegressorState::zero(cfg.dims()), 100);
    const AffineNormalization nz = cfg.normalization();
    const Vec eq = nz.denormalize_state(Vec::Zero(cfg.dims().n()), cfg.dims());
    double drift = 0.0;
    for (const auto& x : t.states()) {
      drift = std::max(drift, (nz.denormalize_state(x.values(), cfg.dims()) - eq).cwiseAbs().maxCoeff());
    }
    d << "|rhs(h, u)| = " << rhs << ", max deviation over 100 steps " << drift;
    return rhs < 1e-4 && !t.failure && t.steps.size() == 100 && drift <= 1e-5;
  });

  criterion(10, "error-constant trend", [&](auto& d) {
    if (!complete) return false;
    const auto& s = *small->fit;
    const auto& l = *large->fit;
    d << "c_x " << l.errors.c_x << " <= " << s.errors.c_x << ", c_u " << l.errors.c_u << " <= "
      << s.errors.c_u << ", fill " << l.fill.value << " < " << s.fill.value;
    return l.errors.c_x <= s.errors.c_x && l.errors.c_u <= s.errors.c_u &&
           l.fill.value < s.fill.value;
  });

  criterion(11, "Lyapunov decrease", [&](auto& d) {
    if (!complete) return false;
    const auto& rep = large->cert->report;
    d << "D=2501 alpha_bar = " << rep.alpha_bar << " over " << rep.active_steps
      << " active steps, verdict '" << to_string(rep.verdict) << "'";
    return rep.verdict == DecreaseVerdict::exponential_decrease_verified && rep.alpha_bar > 0.0;
  });

  std::printf("%d of 11 criteria failed", failures);
  if (!known_red.empty()) std::printf(" (%zu listed as known red)", known_red.size());
  std::printf("\n");
  return unexpected == 0 ? 0 : 1;
}
