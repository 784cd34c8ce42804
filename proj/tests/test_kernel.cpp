#include <doctest.h>

#include <cmath>
#include <random>

#include "narxmpc/kernel.hpp"

using namespace narxmpc;

namespace {

// Two-dimensional sites stored as (x, u) with p = m = nu = 1.
Dataset dataset(const Mat& sites, const Vec& y) {
  Dataset d;
  d.dims = NarxDims::make(1, 1, 1);
  d.sites = sites;
  d.targets = y;
  d.normalization = AffineNormalization::identity(d.dims);
  d.contains_origin = d.origin_index().has_value();
  return d;
}

Dataset three_sites() {
  Mat s(3, 2);
  s << 0.0, 0.0, 0.3, 0.1, 0.5, -0.4;
  Vec y(3);
  y << 0.0, 1.0, -0.5;
  return dataset(s, y);
}

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_SUITE("kernel") {

TEST_CASE("Wendland profile") {
  CHECK(wendland_phi(0.0) == doctest::Approx(1.0 / 30.0));
  CHECK(wendland_phi(0.5) == doctest::Approx(3.6458333e-3).epsilon(1e-6));
  CHECK(wendland_phi(1.0) == 0.0);
  CHECK(wendland_phi(1.7) == 0.0);
  CHECK_THROWS(wendland_phi(-0.1));
  // Derivative against a central difference.
  for (double r : {0.1, 0.4, 0.8}) {
    const double h = 1e-6;
    CHECK(wendland_dphi(r) ==
          doctest::Approx((wendland_phi(r + h) - wendland_phi(r - h)) / (2 * h)).epsilon(1e-7));
  }
  CHECK(wendland_dphi(0.0) == 0.0);
  CHECK(wendland_dphi(1.2) == 0.0);
}

TEST_CASE("kernel_eval uses the lengthscale") {
  const KernelSpec spec = KernelSpec::wendland(2, 2.0);
  CHECK(kernel_eval(spec, v2(0, 0), v2(0, 1)) == doctest::Approx(wendland_phi(0.5)));
  CHECK(kernel_eval(spec, v2(0, 0), v2(2, 0)) == 0.0);
  CHECK_THROWS_AS(KernelSpec::wendland(2, 0.0).validate(), ConfigError);
}

TEST_CASE("single-site interpolant") {
  Mat s(1, 2);
  s << 0.2, -0.1;
  const KernelInterpolant m = fit_interpolant(KernelSpec::wendland(2), dataset(s, Vec::Constant(1, 1.5)));
  CHECK(m.coefficients()(0, 0) == doctest::Approx(45.0));
  CHECK(m.rkhs_norm() == doctest::Approx(1.5 * std::sqrt(30.0)));
  CHECK(m.predict(v2(0.2, -0.1))[0] == doctest::Approx(1.5));
  CHECK(m.predict(v2(5.0, 5.0))[0] == 0.0);
}

TEST_CASE("three-site interpolant matches a reference solve") {
  const KernelInterpolant m = fit_interpolant(KernelSpec::wendland(2), three_sites());
  const Mat& a = m.coefficients();
  CHECK(a(0, 0) == doctest::Approx(-13.691124730321674).epsilon(1e-10));
  CHECK(a(1, 0) == doctest::Approx(36.6334925444494).epsilon(1e-10));
  CHECK(a(2, 0) == doctest::Approx(-17.485003919960352).epsilon(1e-10));
  const Vec q = v2(0.2, -0.1);
  CHECK(m.predict(q)[0] == doctest::Approx(0.3418594138257169).epsilon(1e-10));
  CHECK(m.power_function(q).value == doctest::Approx(0.12398129298716445).epsilon(1e-8));
  CHECK_FALSE(m.power_function(q).degraded);
  CHECK(m.rkhs_norm() == doctest::Approx(6.736170611291669).epsilon(1e-10));
  CHECK(m.max_site_residual() < 1e-12);
  CHECK(m.power_function(v2(0.3, 0.1)).value < 1e-6);
}

TEST_CASE("interpolant gradient against finite differences") {
  const KernelInterpolant m = fit_interpolant(KernelSpec::wendland(2), three_sites());
  const Vec q = v2(0.15, -0.05);
  const Mat g = m.predict_gradient(q);
  const double h = 1e-6;
  for (int j = 0; j < 2; ++j) {
    Vec a = q, b = q;
    a[j] += h;
    b[j] -= h;
    CHECK(g(0, j) == doctest::Approx((m.predict(a)[0] - m.predict(b)[0]) / (2 * h)).epsilon(1e-6));
  }
  Mat jx, ju;
  m.jacobian(q.head(1), q.tail(1), jx, ju);
  CHECK(jx(0, 0) == doctest::Approx(g(0, 0)));
  CHECK(ju(0, 0) == doctest::Approx(g(0, 1)));
}

TEST_CASE("duplicate sites are rejected") {
  Mat s(2, 2);
  s << 0.1, 0.1, 0.1, 0.1;
  CHECK_THROWS(fit_interpolant(KernelSpec::wendland(2), dataset(s, Vec::Zero(2))));
}

TEST_CASE("jitter marks the certificate degraded") {
  const KernelInterpolant m = fit_interpolant(KernelSpec::wendland(2), three_sites(), 1e-3);
  CHECK(m.power_function(v2(0.1, 0.1)).degraded);
  CHECK(m.max_site_residual() > 0.0);
  CHECK_THROWS_AS(fit_interpolant(KernelSpec::wendland(2), three_sites(), -1.0), ConfigError);
}

TEST_CASE("custom profile without compact support is refused") {
  KernelSpec s;
  s.family = KernelFamily::custom;
  s.input_dim = 2;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("fill distance") {
  Mat corners(4, 2);
  corners << 0, 0, 0, 1, 1, 0, 1, 1;
  Mat center(1, 2);
  center << 0.5, 0.5;
  CHECK(fill_distance(corners, center).value == doctest::Approx(std::sqrt(0.5)));
  const DomainBox box{Vec::Zero(2), Vec::Ones(2)};
  const Mat grid = probe_grid(box, 3);
  CHECK(grid.rows() == 9);
  CHECK(fill_distance(corners, grid).value == doctest::Approx(std::sqrt(0.5)));
  Mat dense(9, 2);
  dense = grid;
  CHECK(fill_distance(dense, grid).value == 0.0);
}

TEST_CASE("error constants vanish when the model equals the truth") {
  const KernelInterpolant m = fit_interpolant(KernelSpec::wendland(2), three_sites());
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-0.5, 0.5);
  std::vector<StateInputSample> samples;
  for (int i = 0; i < 50; ++i) samples.push_back({Vec::Constant(1, U(rng)), Vec::Constant(1, U(rng))});
  const ErrorConstants e = estimate_error_constants(m, m, samples);
  CHECK(e.c_x == 0.0);
  CHECK(e.c_u == 0.0);
  CHECK(e.sample_count == 50);
}

TEST_CASE("error constants bound every sample") {
  const KernelInterpolant m = fit_interpolant(KernelSpec::wendland(2), three_sites());
  const auto d = NarxDims::make(1, 1, 1);
  const FunctionDynamics truth(d, [](const Vec& x, const Vec& u) {
    return Vec::Constant(1, 0.8 * x[0] - 0.3 * u[0]);
  });
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-0.5, 0.5);
  std::vector<StateInputSample> samples{{Vec::Zero(1), Vec::Zero(1)}};
  for (int i = 0; i < 200; ++i) samples.push_back({Vec::Constant(1, U(rng)), Vec::Constant(1, U(rng))});
  const ErrorConstants e = estimate_error_constants(truth, m, samples);
  for (const auto& s : samples) {
    const double r = (truth.output(s.x, s.u) - m.output(s.x, s.u)).norm();
    CHECK(r <= e.bound(s.x, s.u) + 1e-12);
  }
}

TEST_CASE("error constants refuse a model off the equilibrium") {
  const auto d = NarxDims::make(1, 1, 1);
  const FunctionDynamics truth(d, [](const Vec&, const Vec&) { return Vec::Constant(1, 0.0); });
  const FunctionDynamics offset(d, [](const Vec&, const Vec&) { return Vec::Constant(1, 1e-3); });
  const std::vector<StateInputSample> samples{{Vec::Zero(1), Vec::Zero(1)}};
  CHECK_THROWS_WITH(estimate_error_constants(truth, offset, samples),
                    doctest::Contains("equilibrium mismatch"));
}

TEST_CASE("Lipschitz lower bound of a linear map") {
  const auto d = NarxDims::make(1, 1, 1);
  const FunctionDynamics f(d, [](const Vec& x, const Vec&) { return Vec::Constant(1, 3.0 * x[0]); });
  const std::vector<StatePair> pairs{{Vec::Constant(1, 0.1), Vec::Constant(1, 0.4), Vec::Zero(1)}};
  CHECK(estimate_lipschitz(f, pairs) == doctest::Approx(3.0));
}

}  // TEST_SUITE
