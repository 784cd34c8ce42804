#include <doctest.h>

#include <random>

#include "narxmpc/mpc.hpp"

using namespace narxmpc;

namespace {

Vec scalar(double v) { return Vec::Constant(1, v); }

// y+ = a y(k) + b u(k) with analytic Jacobians.
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

// A smooth map that mixes the whole regressor.
std::shared_ptr<FunctionDynamics> mixing() {
  const auto d = NarxDims::make(1, 1, 2);
  return std::make_shared<FunctionDynamics>(
      d,
      [](const Vec& x, const Vec& u) {
        return scalar(0.7 * std::tanh(x[0]) + 0.2 * x[1] * x[2] + 0.4 * u[0] + 0.1 * u[0] * x[0]);
      },
      [](const Vec& x, const Vec& u, Mat& jx, Mat& ju) {
        const double t = std::tanh(x[0]);
        jx.resize(1, 3);
        jx << 0.7 * (1 - t * t) + 0.1 * u[0], 0.2 * x[2], 0.2 * x[1];
        ju = Mat::Constant(1, 1, 0.4 + 0.1 * x[0]);
      });
}

MpcConfig config(int horizon, double lo, double hi) {
  MpcConfig c;
  c.horizon = horizon;
  c.weights = StageCostWeights::scalar(1.0, 0.1);
  c.box = InputBox::make(scalar(lo), scalar(hi));
  return c;
}

}  // namespace

TEST_SUITE("mpc") {

TEST_CASE("stage cost") {
  const auto w = StageCostWeights::scalar(1.0, 0.1);
  CHECK(stage_cost(scalar(2), scalar(1), w) == doctest::Approx(4.1));
  CHECK(stage_cost(scalar(0), scalar(0), w) == 0.0);
  CHECK_THROWS_AS(StageCostWeights::scalar(1.0, 0.0), ConfigError);
  CHECK_THROWS_AS(stage_cost(Vec::Zero(2), scalar(0), w), DimensionError);
}

TEST_CASE("config validation") {
  const auto f = linear(1, 0.9, 0.5);
  MpcConfig c = config(0, -1, 1);
  CHECK_THROWS_AS(c.validate(f->dims()), ConfigError);
  CHECK_THROWS_AS(InputBox::make(scalar(1), scalar(0)), ConfigError);
}

TEST_CASE("cost of a hand-rolled sequence") {
  const auto f = linear(1, 0.9, 0.5);
  const auto w = StageCostWeights::scalar(1.0, 0.1);
  Mat u(1, 2);
  u << 1.0, -1.0;
  // y1 = 0.9 + 0.5 = 1.4, y2 = 1.26 - 0.5 = 0.76
  const double expect = 1.4 * 1.4 + 0.1 + 0.76 * 0.76 + 0.1;
  CHECK(cost_J(*f, RegressorState(scalar(1), f->dims()), u, w) == doctest::Approx(expect));
}

TEST_CASE("zero dynamics: gradient is 2 R u") {
  const auto d = NarxDims::make(1, 1, 2);
  const FunctionDynamics f(
      d, [](const Vec&, const Vec&) { return scalar(0); },
      [](const Vec&, const Vec&, Mat& jx, Mat& ju) {
        jx = Mat::Zero(1, 3);
        ju = Mat::Zero(1, 1);
      });
  Mat u(1, 3);
  u << 0.5, -1.0, 2.0;
  const auto g = cost_gradient(f, RegressorState(Vec::Ones(3), d), u, StageCostWeights::scalar(1, 0.1));
  CHECK(g.gradient.isApprox(0.2 * u));
  const OcpSolution s = solve_ocp(f, RegressorState(Vec::Ones(3), d), config(3, -1, 1));
  CHECK(s.value < 1e-14);
  CHECK(s.inputs.norm() < 1e-7);
}

TEST_CASE("adjoint gradient against central differences") {
  const auto f = mixing();
  const auto w = StageCostWeights::scalar(1.0, 0.1);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    Vec x(3);
    x << U(rng), U(rng), U(rng);
    Mat u(1, 6);
    for (int k = 0; k < 6; ++k) u(0, k) = U(rng);
    const RegressorState x0(x, f->dims());
    const auto g = cost_gradient(*f, x0, u, w);
    CHECK(g.value == doctest::Approx(cost_J(*f, x0, u, w)));
    for (int k = 0; k < 6; ++k) {
      Mat a = u, b = u;
      a(0, k) += 1e-6;
      b(0, k) -= 1e-6;
      const double fd = (cost_J(*f, x0, a, w) - cost_J(*f, x0, b, w)) / 2e-6;
      CHECK(g.gradient(0, k) == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("cost_gradient needs a differentiable model") {
  const auto d = NarxDims::make(1, 1, 1);
  const FunctionDynamics f(d, [](const Vec& x, const Vec&) { return x; });
  CHECK_THROWS(cost_gradient(f, RegressorState::zero(d), Mat::Zero(1, 2), StageCostWeights::scalar(1, 1)));
}

TEST_CASE("two-step linear problem has the least-squares optimum") {
  const auto f = linear(1, 0.9, 0.5);
  const OcpSolution s = solve_ocp(*f, RegressorState(scalar(1), f->dims()), config(2, -10, 10));
  CHECK(s.converged);
  CHECK(s.value == doctest::Approx(0.24456042031523648).epsilon(1e-10));
  CHECK(s.inputs(0, 0) == doctest::Approx(-1.3586690017513132).epsilon(1e-6));
  CHECK(s.inputs(0, 1) == doctest::Approx(-0.28371278458844174).epsilon(1e-6));
}

TEST_CASE("box constraints are respected") {
  const auto f = linear(1, 0.9, 0.5);
  const OcpSolution s = solve_ocp(*f, RegressorState(scalar(1), f->dims()), config(2, -0.5, 0.5));
  CHECK(s.inputs(0, 0) == doctest::Approx(-0.5));
  CHECK((s.inputs.array() >= -0.5).all());
  CHECK((s.inputs.array() <= 0.5).all());
}

TEST_CASE("optimal value never exceeds a random feasible sequence") {
  const auto f = mixing();
  const MpcConfig c = config(5, -1, 1);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Vec x(3);
  x << 0.8, -0.3, 0.5;
  const RegressorState x0(x, f->dims());
  const double V = solve_ocp(*f, x0, c).value;
  for (int i = 0; i < 100; ++i) {
    Mat u(1, 5);
    for (int k = 0; k < 5; ++k) u(0, k) = U(rng);
    CHECK(V <= cost_J(*f, x0, u, c.weights) + 1e-8);
  }
}

TEST_CASE("multistart reports its spread") {
  const auto f = mixing();
  MpcConfig c = config(4, -1, 1);
  c.multistart = 4;
  c.seed = 9;
  Vec x(3);
  x << 0.5, 0.5, 0.0;
  const OcpSolution s = solve_ocp(*f, RegressorState(x, f->dims()), c);
  CHECK(s.multistart_spread >= 0.0);
  CHECK(s.best_start >= 0);
  CHECK(s.best_start < 4);
}

TEST_CASE("closed loop at the origin stays there") {
  const auto f = linear(2, 0.9, 0.5);
  const ClosedLoopTrace t = run_closed_loop(*f, *f, config(5, -1, 1), RegressorState::zero(f->dims()), 10);
  REQUIRE(t.steps.size() == 10);
  for (const auto& s : t.steps) {
    CHECK(s.u.norm() < 1e-12);
    CHECK(s.y.norm() < 1e-12);
  }
  REQUIRE(t.terminal);
  CHECK(t.terminal->values().norm() < 1e-12);
}

TEST_CASE("closed loop drives an unstable plant to the origin") {
  const auto f = linear(2, 1.2, 0.5);
  Vec x(3);
  x << 1.0, 1.0, 0.0;
  const ClosedLoopTrace t = run_closed_loop(*f, *f, config(10, -2, 2), RegressorState(x, f->dims()), 30);
  REQUIRE_FALSE(t.failure);
  REQUIRE(t.terminal);
  CHECK(t.terminal->values().norm() < 1e-3);
  REQUIRE(t.terminal_V);
  // Each record's regressor is the previous one shifted.
  for (std::size_t k = 1; k < t.steps.size(); ++k) {
    const auto& prev = t.steps[k - 1];
    CHECK(t.steps[k].x[0] == doctest::Approx(prev.y[0]));
    CHECK(t.steps[k].x[1] == doctest::Approx(prev.x[0]));
    CHECK(t.steps[k].x[2] == doctest::Approx(prev.u[0]));
  }
}

TEST_CASE("horizon 1 and zero steps") {
  const auto f = linear(2, 0.9, 0.5);
  Vec x(3);
  x << 1.0, 0.0, 0.0;
  const auto t1 = run_closed_loop(*f, *f, config(1, -1, 1), RegressorState(x, f->dims()), 5);
  CHECK(t1.steps.size() == 5);
  const auto t0 = run_closed_loop(*f, *f, config(3, -1, 1), RegressorState(x, f->dims()), 0);
  CHECK(t0.steps.empty());
  CHECK_FALSE(t0.failure);
  CHECK(t0.states().size() == 1);
}

TEST_CASE("plant failures end the loop with a partial trace") {
  const auto d = NarxDims::make(1, 1, 2);
  auto surrogate = linear(2, 0.9, 0.5);
  int calls = 0;
  const FunctionDynamics plant(d, [&calls](const Vec& x, const Vec& u) {
    if (++calls > 3) throw DynamicsError("level out of range");
    return scalar(0.9 * x[0] + 0.5 * u[0]);
  });
  Vec x(3);
  x << 1.0, 0.0, 0.0;
  const auto t = run_closed_loop(plant, *surrogate, config(3, -1, 1), RegressorState(x, d), 10);
  REQUIRE(t.failure);
  CHECK(t.failure->step == 3);
  CHECK(t.steps.size() == 3);
}

}  // TEST_SUITE
