#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "narxmpc/stability.hpp"

using namespace narxmpc;

namespace {

Vec scalar(double v) { return Vec::Constant(1, v); }

std::shared_ptr<FunctionDynamics> linear(int nu, double a, double b) {
  const auto d = NarxDims::make(1, 1, nu);
  return std::make_shared<FunctionDynamics>(
      d, [a, b](const Vec& x, const Vec& u) { return scalar(a * x[0] + b * u[0]); },
      [a, b, n = d.n()](const Vec&, const Vec&, Mat& jx, Mat& ju) {
        jx = Mat::Zero(1, n);
        jx(0, 0) = a;
        ju = Mat::Constant(1, 1, b);
      });
}

MpcConfig config(int horizon) {
  MpcConfig c;
  c.horizon = horizon;
  c.box = InputBox::make(scalar(-1), scalar(1));
  return c;
}

// A trace whose states are given directly, with chosen V values.
ClosedLoopTrace synthetic(const std::vector<double>& y, const std::vector<double>& V) {
  ClosedLoopTrace t;
  t.dims = NarxDims::make(1, 1, 1);
  for (std::size_t k = 0; k + 1 < y.size(); ++k) {
    ClosedLoopStep s;
    s.k = static_cast<int>(k);
    s.x = RegressorState(scalar(y[k]), t.dims);
    s.u = scalar(0);
    s.y = scalar(y[k + 1]);
    s.V = V[k];
    t.steps.push_back(s);
  }
  t.terminal = RegressorState(scalar(y.back()), t.dims);
  t.terminal_V = V.back();
  return t;
}

}  // namespace

TEST_SUITE("stability") {

TEST_CASE("storage matrix for nu = 2") {
  const StorageMatrix s = storage_matrix(NarxDims::make(1, 1, 2), StageCostWeights::scalar(1, 0.1));
  Mat expect = Mat::Zero(3, 3);
  expect.diagonal() << 1.0, 0.5, 0.1;
  CHECK(s.P.isApprox(expect));
  CHECK(s.sigma_min == doctest::Approx(0.1));
  CHECK(s.eta() == doctest::Approx(0.5));
  CHECK(storage_W(Vec::Ones(3), s) == doctest::Approx(1.6));
}

TEST_CASE("storage matrix for nu = 3 and its history form") {
  const auto d = NarxDims::make(1, 1, 3);
  const auto w = StageCostWeights::scalar(2.0, 0.3);
  const StorageMatrix s = storage_matrix(d, w);
  Vec diag(5);
  diag << 2.0, 2.0 * 2 / 3, 2.0 / 3, 0.3, 0.3 * 2 / 3;
  CHECK(s.P.diagonal().isApprox(diag));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> N;
  for (int i = 0; i < 100; ++i) {
    Vec x(5);
    for (auto& v : x) v = N(rng);
    CHECK(std::abs(storage_W(x, s) - storage_W_history(x, d, w)) < 1e-12);
  }
}

TEST_CASE("nu = 1 storage is the output weight") {
  const StorageMatrix s = storage_matrix(NarxDims::make(1, 1, 1), StageCostWeights::scalar(3, 1));
  CHECK(s.P.rows() == 1);
  CHECK(s.P(0, 0) == doctest::Approx(3.0));
  CHECK(s.eta() == 0.0);
}

TEST_CASE("detectability holds for an arbitrary NARX map") {
  const auto d = NarxDims::make(1, 1, 2);
  const FunctionDynamics f(d, [](const Vec& x, const Vec& u) {
    return scalar(3.0 * std::sin(x[0] * x[2]) + x[1] - 5.0 * u[0]);
  });
  const StorageMatrix s = storage_matrix(d, StageCostWeights::scalar(1, 0.1));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-2, 2);
  std::vector<StateInputSample> samples{{Vec::Zero(3), Vec::Zero(1)}};
  for (int i = 0; i < 500; ++i) samples.push_back({Vec::NullaryExpr(3, [&] { return U(rng); }), scalar(U(rng))});
  const DetectabilityReport r = check_detectability(f, s, samples);
  CHECK(r.passed);
  CHECK(r.samples == samples.size());
  CHECK(r.max_violation <= 1e-10);
}

TEST_CASE("growth bound of zero dynamics is zero") {
  const auto d = NarxDims::make(1, 1, 2);
  const FunctionDynamics f(
      d, [](const Vec&, const Vec&) { return scalar(0); },
      [](const Vec&, const Vec&, Mat& jx, Mat& ju) {
        jx = Mat::Zero(1, 3);
        ju = Mat::Zero(1, 1);
      });
  std::vector<Vec> states;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int i = 0; i < 50; ++i) states.push_back(Vec::NullaryExpr(3, [&] { return U(rng); }));
  const GrowthBoundEstimate g = estimate_growth_bound(f, config(4), states, 4, "zero");
  REQUIRE(g.B.size() == 4);
  for (double b : g.B) CHECK(b < 1e-12);
  CHECK(gamma_bar(g, storage_matrix(d, StageCostWeights::scalar(1, 0.1))) < 1e-10);
}

TEST_CASE("growth bound is nondecreasing in N") {
  const auto f = linear(2, 1.1, 0.5);
  std::vector<Vec> states;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int i = 0; i < 50; ++i) states.push_back(Vec::NullaryExpr(3, [&] { return U(rng); }));
  const GrowthBoundEstimate g = estimate_growth_bound(*f, config(6), states, 6, "linear");
  for (std::size_t N = 1; N < g.B.size(); ++N) CHECK(g.B[N] >= g.B[N - 1]);
  CHECK(g.B[0] > 0.0);
}

TEST_CASE("minimal horizon formula") {
  const double hand = 1.0 + (std::log(10.0) - std::log(0.5)) / (std::log(11.0) - std::log(10.5));
  CHECK(std::abs(min_horizon(10.0, 2) - hand) < 1e-12);
  CHECK(min_horizon(10.0, 2) == doctest::Approx(65.39663084091907).epsilon(1e-12));
  CHECK(min_horizon(0.5, 2) == doctest::Approx(1.0));
  double prev = min_horizon(0.5, 2);
  for (double g = 0.6; g < 200.0; g *= 1.3) {
    const double v = min_horizon(g, 2);
    CHECK(v > prev);
    prev = v;
  }
  CHECK_THROWS(min_horizon(0.0, 2));
  CHECK_THROWS(min_horizon(-1.0, 2));
}

TEST_CASE("gamma bar divides by the smallest eigenvalue of P") {
  GrowthBoundEstimate g;
  g.B = {0.3, 0.8, 0.8};
  const auto s = storage_matrix(NarxDims::make(1, 1, 2), StageCostWeights::scalar(1, 0.1));
  CHECK(gamma_bar(g, s) == doctest::Approx(8.0));
  const auto s2 = storage_matrix(NarxDims::make(1, 1, 2), StageCostWeights::scalar(1, 0.05));
  CHECK(gamma_bar(g, s2) > gamma_bar(g, s));
}

TEST_CASE("Lyapunov candidate") {
  const auto f = linear(2, 0.9, 0.5);
  const auto s = storage_matrix(f->dims(), StageCostWeights::scalar(1, 0.1));
  CHECK(lyapunov_Y(*f, config(5), RegressorState::zero(f->dims()), s) == doctest::Approx(0.0));
  Vec x(3);
  x << 0.4, -0.2, 0.3;
  const RegressorState r(x, f->dims());
  CHECK(lyapunov_Y(*f, config(5), r, s) >= storage_W(x, s));
}

TEST_CASE("verify_decrease at the equilibrium") {
  const auto rep = verify_decrease(synthetic({0, 0, 0, 0}, {0, 0, 0, 0}),
                                   storage_matrix(NarxDims::make(1, 1, 1), StageCostWeights::scalar(1, 1)));
  CHECK(rep.verdict == DecreaseVerdict::at_equilibrium);
  CHECK(rep.active_steps == 0);
  CHECK(to_string(rep.verdict) == "at equilibrium");
}

TEST_CASE("verify_decrease on a geometric trace") {
  // y(k) = 0.5^k, V = y^2, so Y = 2 y^2 and delta = -1.5 y^2.
  std::vector<double> y, V;
  for (int k = 0; k <= 10; ++k) {
    y.push_back(std::pow(0.5, k));
    V.push_back(y.back() * y.back());
  }
  const auto rep = verify_decrease(synthetic(y, V),
                                   storage_matrix(NarxDims::make(1, 1, 1), StageCostWeights::scalar(1, 1)));
  CHECK(rep.verdict == DecreaseVerdict::exponential_decrease_verified);
  CHECK(rep.alpha_bar == doctest::Approx(1.5));
  CHECK(rep.decay_rate == doctest::Approx(std::log(0.5)));
  CHECK(rep.decay_r2 == doctest::Approx(1.0));
  CHECK(rep.first_violation == -1);
}

TEST_CASE("verify_decrease names the first violation") {
  const std::vector<double> y{1.0, 0.5, 0.6, 0.1};
  const std::vector<double> V{0.0, 0.0, 0.0, 0.0};
  const auto rep = verify_decrease(synthetic(y, V),
                                   storage_matrix(NarxDims::make(1, 1, 1), StageCostWeights::scalar(1, 1)));
  CHECK(rep.verdict == DecreaseVerdict::decrease_violated);
  CHECK(rep.first_violation == 1);
}

TEST_CASE("dead band excludes tiny states") {
  const std::vector<double> y{1.0, 0.1, 1e-7, 2e-7};
  const std::vector<double> V{0.0, 0.0, 0.0, 0.0};
  const auto rep = verify_decrease(synthetic(y, V),
                                   storage_matrix(NarxDims::make(1, 1, 1), StageCostWeights::scalar(1, 1)));
  CHECK(rep.verdict == DecreaseVerdict::exponential_decrease_verified);
  CHECK(rep.active_steps == 2);
}

TEST_CASE("least-squares line") {
  const std::vector<double> t{0, 1, 2, 3};
  const std::vector<double> v{1, 3, 5, 7};
  const LinearFit f = fit_line(t, v);
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.r2 == doctest::Approx(1.0));
}

}  // TEST_SUITE
