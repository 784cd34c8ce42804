#include "narxmpc/two_tank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/toms748_solve.hpp>
#include <boost/random/sobol.hpp>

namespace narxmpc {

void TwoTankParams::validate() const {
  if (!(A1 > 0.0) || !(c12 > 0.0) || !(c2 > 0.0) || !(dt > 0.0)) {
    throw ConfigError("two-tank parameters A1, c12, c2, dt must all be positive");
  }
}

double TwoTankParams::equilibrium_input(double h1) const { return A1 * c2 * std::sqrt(h1); }

double TwoTankParams::equilibrium_h2(double h1) const {
  const double r = c2 / c12;
  return h1 + r * r * h1;
}

TankRates two_tank_rhs(const PhysicalState& s, double u, const TwoTankParams& params) {
  if (!(s.h1 >= 0.0)) {
    throw DynamicsError("two-tank state invalid: h1 = " + std::to_string(s.h1) + " < 0");
  }
  if (!(s.h2 >= s.h1)) {
    throw DynamicsError("two-tank state invalid: h2 = " + std::to_string(s.h2) + " < h1 = " +
                        std::to_string(s.h1));
  }
  const double q12 = params.c12 * std::sqrt(s.h2 - s.h1);
  return {q12 - params.c2 * std::sqrt(s.h1), u / params.A1 - q12};
}

PhysicalState two_tank_step(const PhysicalState& s, double u, const TwoTankParams& params) {
  using V2 = Eigen::Vector2d;
  auto rhs = [&](const V2& v) -> V2 {
    const TankRates r = two_tank_rhs({v[0], v[1]}, u, params);
    return {r.dh1, r.dh2};
  };
  const V2 next = rk4_step(rhs, V2(s.h1, s.h2), params.dt);
  return {next[0], next[1]};
}

TwoTankSimulator::TwoTankSimulator(TwoTankParams params, PhysicalState initial)
    : params_(params), state_(initial) {
  params_.validate();
}

double TwoTankSimulator::step(double u) {
  state_ = two_tank_step(state_, u, params_);
  return state_.h1;
}

TwoTankNarx::TwoTankNarx(TwoTankParams params, int nu)
    : params_(params), dims_(NarxDims::make(1, 1, nu)) {
  params_.validate();
  if (nu < 2) throw ConfigError("two-tank NARX wrapper needs lag nu >= 2 to recover h2");
}

PhysicalState TwoTankNarx::recover_state(const Vec& x) const {
  if (x.size() != dims_.n()) throw DimensionError("x", "does not match the two-tank regressor");
  const double y0 = x[0], y1 = x[1], u1 = x[dims_.input_block()];
  if (!std::isfinite(y0) || !std::isfinite(y1) || !std::isfinite(u1)) {
    throw DynamicsError("non-finite regressor");
  }
  // g(h2) = h1 after one step from (y1, h2) minus y0; increasing in h2.
  auto step_from = [&](double h2) { return two_tank_step({y1, h2}, u1, params_); };
  auto g = [&](double h2) { return step_from(h2).h1 - y0; };

  // g is undefined where an RK4 stage leaves the valid region and, for small
  // levels, not monotone right next to h2 = y1 (sqrt(h2 - h1) is not smooth
  // there). Bracket on the upper, increasing branch: grow the gap h2 - y1 until
  // g >= 0, then halve it until g < 0.
  auto try_g = [&](double h2) -> std::optional<double> {
    try {
      return g(h2);
    } catch (const DynamicsError&) {
      return std::nullopt;
    }
  };
  double d_hi = 1e-3;
  std::optional<double> ghi_opt = try_g(y1 + d_hi);
  while (!ghi_opt || *ghi_opt < 0.0) {
    d_hi *= 2.0;
    if (d_hi > 100.0) throw DynamicsError("hidden level bracket exceeded 100 m");
    ghi_opt = try_g(y1 + d_hi);
  }
  double hi = y1 + d_hi, ghi = *ghi_opt;
  if (ghi == 0.0) return step_from(hi);
  std::optional<double> lo, glo;
  for (double d = 0.5 * d_hi; d > 1e-14; d *= 0.5) {
    const auto v = try_g(y1 + d);
    if (!v) break;
    if (*v < 0.0) {
      lo = y1 + d;
      glo = *v;
      break;
    }
    hi = y1 + d;
    ghi = *v;
    if (ghi == 0.0) return step_from(hi);
  }
  if (!lo) {
    // The root sits in a dip below the branch. Scan the gap finely and take
    // the uppermost sign change; if the dip falls between scan points, refine
    // the lowest one with a bracketed minimization.
    std::vector<double> ds, gs;
    for (double d = 1e-12; d < std::max(d_hi, 0.1); d *= 1.02) {
      if (const auto v = try_g(y1 + d)) {
        ds.push_back(d);
        gs.push_back(*v);
      }
    }
    for (std::size_t i = ds.size(); i-- > 1;) {
      if (gs[i - 1] < 0.0 && gs[i] >= 0.0) {
        lo = y1 + ds[i - 1];
        glo = gs[i - 1];
        hi = y1 + ds[i];
        ghi = gs[i];
        break;
      }
    }
    if (!lo && ds.size() >= 3) {
      const auto i = static_cast<std::size_t>(
          std::min_element(gs.begin() + 1, gs.end() - 1) - gs.begin());
      auto gm = [&](double d) { return try_g(y1 + d).value_or(std::numeric_limits<double>::max()); };
      const auto m = boost::math::tools::brent_find_minima(gm, ds[i - 1], ds[i + 1], 52);
      if (m.second <= 0.0) {
        if (m.second == 0.0) return step_from(y1 + m.first);
        lo = y1 + m.first;
        glo = m.second;
        hi = y1 + ds[i + 1];
        ghi = gs[i + 1];
      }
    }
    if (!lo) {
      throw DynamicsError("output " + std::to_string(y0) + " unreachable from level " +
                          std::to_string(y1));
    }
    if (ghi == 0.0) return step_from(hi);
  }

  boost::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(
      g, *lo, hi, *glo, ghi, boost::math::tools::eps_tolerance<double>(52), iters);
  return step_from(0.5 * (r.first + r.second));
}

Vec TwoTankNarx::output(const Vec& x, const Vec& u) const {
  if (u.size() != 1) throw DimensionError("u", "two-tank input is scalar");
  const PhysicalState s = recover_state(x);
  Vec y(1);
  y[0] = two_tank_step(s, u[0], params_).h1;
  return y;
}

std::string to_string(SamplingMode mode) {
  return mode == SamplingMode::trajectory ? "trajectory" : "state_grid";
}

SamplingMode parse_sampling_mode(const std::string& s) {
  if (s == "trajectory") return SamplingMode::trajectory;
  if (s == "state_grid") return SamplingMode::state_grid;
  throw ConfigError("mode: unknown value '" + s + "' (accepted: trajectory, state_grid)");
}

void BenchmarkConfig::validate() const {
  if (D_values.empty()) throw ConfigError("D: at least one dataset size required");
  for (const int D : D_values) {
    if (D < 1) throw ConfigError("D: dataset size must be >= 1, got " + std::to_string(D));
  }
  if (N < 1) throw ConfigError("N: horizon must be >= 1");
  if (!(Q > 0.0)) throw ConfigError("Q: must be positive");
  if (!(R > 0.0)) throw ConfigError("R: must be positive");
  if (nu < 2) throw ConfigError("nu: the two-tank benchmark needs nu >= 2");
  if (steps < 0) throw ConfigError("steps: must be >= 0");
  if (!(u_lo >= 0.0) || !(u_hi > u_lo)) throw ConfigError("u_lo/u_hi: need 0 <= u_lo < u_hi");
  if (!(dt > 0.0)) throw ConfigError("dt: must be positive");
  if (!(sigma > 0.0)) throw ConfigError("sigma: must be positive");
  if (!(jitter >= 0.0)) throw ConfigError("jitter: must be >= 0");
  if (!(h_max > 0.0) || !(h1_ref > 0.0) || !(h1_ref < h_max)) {
    throw ConfigError("h1_ref: must lie in (0, h_max)");
  }
  const double ur = u_ref();
  if (ur < u_lo || ur > u_hi) throw ConfigError("h1_ref: equilibrium inflow outside [u_lo, u_hi]");
  if (!(x0_level >= 0.0) || x0_level > h_max) throw ConfigError("x0_level: must lie in [0, h_max]");
  if (growth_states < 0) throw ConfigError("growth_states: must be >= 0");
  if (growth_horizon < 0) throw ConfigError("growth_horizon: must be >= 0");
  if (validation_samples < 1) throw ConfigError("validation_samples: must be >= 1");
}

TwoTankParams BenchmarkConfig::params() const {
  TwoTankParams p;
  p.dt = dt;
  return p;
}

NarxDims BenchmarkConfig::dims() const { return NarxDims::make(1, 1, nu); }

double BenchmarkConfig::u_ref() const { return params().equilibrium_input(h1_ref); }

AffineNormalization BenchmarkConfig::normalization() const {
  return {Vec::Constant(1, h1_ref), Vec::Constant(1, u_ref()), Vec::Constant(1, h_max),
          Vec::Constant(1, u_hi - u_lo)};
}

MpcConfig BenchmarkConfig::mpc_config() const {
  const AffineNormalization nz = normalization();
  MpcConfig c;
  c.horizon = N;
  c.weights = StageCostWeights::scalar(Q, R);
  c.box = InputBox::make(nz.normalize_input(Vec::Constant(1, u_lo)),
                         nz.normalize_input(Vec::Constant(1, u_hi)));
  c.seed = seed;
  return c;
}

DomainBox BenchmarkConfig::omega() const {
  const NarxDims d = dims();
  const AffineNormalization nz = normalization();
  Vec lo(d.n()), hi(d.n());
  lo.head(nu).setConstant(nz.normalize_output(Vec::Constant(1, 0.0))[0]);
  hi.head(nu).setConstant(nz.normalize_output(Vec::Constant(1, h_max))[0]);
  lo.tail(nu - 1).setConstant(nz.normalize_input(Vec::Constant(1, u_lo))[0]);
  hi.tail(nu - 1).setConstant(nz.normalize_input(Vec::Constant(1, u_hi))[0]);
  return {lo, hi};
}

DomainBox BenchmarkConfig::site_box() const {
  const DomainBox om = omega();
  const MpcConfig c = mpc_config();
  return {make_site(om.lo, c.box.lo), make_site(om.hi, c.box.hi)};
}

RegressorState BenchmarkConfig::initial_state() const {
  const NarxDims d = dims();
  Vec raw(d.n());
  raw.head(nu).setConstant(x0_level);
  raw.tail(nu - 1).setConstant(u_ref());
  return {normalization().normalize_state(raw, d), d};
}

DynamicsPtr make_normalized_plant(const BenchmarkConfig& cfg) {
  auto raw = std::make_shared<const TwoTankNarx>(cfg.params(), cfg.nu);
  auto norm = std::make_shared<const NormalizedDynamics>(raw, cfg.normalization());
  return std::make_shared<const FiniteDifferenceDynamics>(norm);
}

namespace {

struct RawTuple {
  Vec x;  // raw regressor
  double u = 0.0;
  double y = 0.0;  // y(k+1)
};

// Runs nu steps from the physical state at time k-nu+1 under inputs
// u(k-nu+1..k-1) (oldest first) and then u(k). Returns nothing if the plant
// fails or a regressor output leaves [0, h_max].
// One RK4 step is not injective in h2 for small levels, so a few regressors
// do not identify the hidden level. Only tuples the regressor plant
// reproduces are kept.
bool reproducible(const TwoTankParams& params, int nu, const RawTuple& t) {
  try {
    const Vec y = TwoTankNarx(params, nu).output(t.x, Vec::Constant(1, t.u));
    return std::abs(y[0] - t.y) <= 1e-13;
  } catch (const DynamicsError&) {
    return false;
  }
}

std::optional<RawTuple> map_physical(const BenchmarkConfig& cfg, const TwoTankParams& params,
                                     PhysicalState s, const std::vector<double>& history,
                                     double u) {
  const int nu = cfg.nu;
  RawTuple t;
  t.x.resize(cfg.dims().n());
  try {
    t.x[nu - 1] = s.h1;
    for (int j = 0; j < nu - 1; ++j) {
      s = two_tank_step(s, history[j], params);
      t.x[nu - 2 - j] = s.h1;
      t.x[nu + (nu - 2 - j)] = history[j];
    }
    t.u = u;
    t.y = two_tank_step(s, u, params).h1;
  } catch (const DynamicsError&) {
    return std::nullopt;
  }
  for (int j = 0; j < nu; ++j) {
    if (t.x[j] < 0.0 || t.x[j] > cfg.h_max) return std::nullopt;
  }
  if (!std::isfinite(t.y)) return std::nullopt;
  if (!reproducible(params, nu, t)) return std::nullopt;
  return t;
}

// Sobol points in [0,1)^dim; the leading all-zero point is skipped.
class SobolStream {
 public:
  SobolStream(int dim, std::uint64_t skip) : dim_(dim), gen_(static_cast<std::size_t>(dim)) {
    gen_.discard(static_cast<boost::uintmax_t>(dim) * (1 + skip));
  }
  std::vector<double> next() {
    std::vector<double> v(dim_);
    for (auto& c : v) c = std::ldexp(static_cast<double>(gen_()), -64);
    return v;
  }

 private:
  int dim_;
  boost::random::sobol gen_;
};

// Draws physical start states and inputs from a unit-cube point:
// (h1, h2 - h1, u(k-nu+1..k-1), u(k)) with h2 in [h1, h1 + h_max].
std::optional<RawTuple> tuple_from_unit(const BenchmarkConfig& cfg, const TwoTankParams& params,
                                        const std::vector<double>& c) {
  const double h1 = c[0] * cfg.h_max;
  const double h2 = h1 + c[1] * cfg.h_max;
  std::vector<double> hist(cfg.nu - 1);
  for (int j = 0; j < cfg.nu - 1; ++j) hist[j] = cfg.u_lo + c[2 + j] * (cfg.u_hi - cfg.u_lo);
  const double u = cfg.u_lo + c[cfg.nu + 1] * (cfg.u_hi - cfg.u_lo);
  return map_physical(cfg, params, {h1, h2}, hist, u);
}

class SiteCollector {
 public:
  SiteCollector(const BenchmarkConfig& cfg, int D)
      : cfg_(cfg), dims_(cfg.dims()), nz_(cfg.normalization()), D_(D) {
    sites_.reserve(D);
    targets_.reserve(D);
    sites_.push_back(Vec::Zero(dims_.site_dim()));
    targets_.push_back(0.0);
  }

  bool full() const { return static_cast<int>(sites_.size()) >= D_; }

  void add(const RawTuple& t) {
    if (full()) return;
    const Vec site = make_site(nz_.normalize_state(t.x, dims_), nz_.normalize_input(Vec::Constant(1, t.u)));
    for (const auto& s : sites_) {
      if ((s - site).norm() <= 1e-8) return;
    }
    sites_.push_back(site);
    targets_.push_back(nz_.normalize_output(Vec::Constant(1, t.y))[0]);
  }

  Dataset finish(const std::string& mode) const {
    if (!full()) {
      throw Error(mode + " sampling produced only " + std::to_string(sites_.size()) + " of " +
                  std::to_string(D_) + " samples inside the domain");
    }
    Dataset d;
    d.dims = dims_;
    d.normalization = nz_;
    d.sites.resize(D_, dims_.site_dim());
    d.targets.resize(D_, 1);
    for (int i = 0; i < D_; ++i) {
      d.sites.row(i) = sites_[i].transpose();
      d.targets(i, 0) = targets_[i];
    }
    d.contains_origin = true;
    return d;
  }

 private:
  const BenchmarkConfig& cfg_;
  NarxDims dims_;
  AffineNormalization nz_;
  int D_;
  std::vector<Vec> sites_;
  std::vector<double> targets_;
};

}  // namespace

Dataset generate_dataset(SamplingMode mode, const BenchmarkConfig& cfg, int D) {
  cfg.validate();
  if (D < 1) throw ConfigError("D: dataset size must be >= 1");
  const TwoTankParams params = cfg.params();
  SiteCollector col(cfg, D);
  const long budget = 1000L * D + 10000;

  if (mode == SamplingMode::state_grid) {
    SobolStream sobol(cfg.nu + 2, 0);
    for (long i = 0; i < budget && !col.full(); ++i) {
      if (auto t = tuple_from_unit(cfg, params, sobol.next())) col.add(*t);
    }
    return col.finish("state_grid");
  }

  // Trajectories of 30 steps from random levels under random inputs held for
  // 3 samples.
  constexpr int kLength = 30, kHold = 3;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> level(0.0, cfg.h_max), inflow(cfg.u_lo, cfg.u_hi);
  for (long traj = 0; traj < budget / kLength && !col.full(); ++traj) {
    const double h1 = level(rng);
    PhysicalState s{h1, h1 + level(rng)};
    std::vector<double> ys{s.h1}, us;
    double u = 0.0;
    for (int k = 0; k < kLength && !col.full(); ++k) {
      if (k % kHold == 0) u = inflow(rng);
      try {
        s = two_tank_step(s, u, params);
      } catch (const DynamicsError&) {
        break;
      }
      us.push_back(u);
      ys.push_back(s.h1);
      // Regressor at time t = ys.size()-2 needs nu outputs and nu-1 inputs.
      const int t = static_cast<int>(ys.size()) - 2;
      if (t < cfg.nu - 1) continue;
      RawTuple tup;
      tup.x.resize(cfg.dims().n());
      bool inside = true;
      for (int j = 0; j < cfg.nu; ++j) {
        tup.x[j] = ys[t - j];
        inside = inside && ys[t - j] >= 0.0 && ys[t - j] <= cfg.h_max;
      }
      for (int j = 0; j < cfg.nu - 1; ++j) tup.x[cfg.nu + j] = us[t - 1 - j];
      tup.u = us[t];
      tup.y = ys[t + 1];
      if (inside && reproducible(params, cfg.nu, tup)) col.add(tup);
    }
  }
  return col.finish("trajectory");
}

std::vector<StateInputSample> sample_state_input_pairs(const BenchmarkConfig& cfg, int count,
                                                       std::uint64_t seed) {
  const TwoTankParams params = cfg.params();
  const NarxDims d = cfg.dims();
  const AffineNormalization nz = cfg.normalization();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<StateInputSample> out;
  out.reserve(count);
  for (long tries = 0; static_cast<int>(out.size()) < count; ++tries) {
    if (tries > 1000L * count + 10000) throw Error("could not sample enough states inside the domain");
    std::vector<double> c(cfg.nu + 2);
    for (auto& v : c) v = unit(rng);
    if (auto t = tuple_from_unit(cfg, params, c)) {
      out.push_back({nz.normalize_state(t->x, d), nz.normalize_input(Vec::Constant(1, t->u))});
    }
  }
  return out;
}

std::vector<Vec> sample_regressors(const BenchmarkConfig& cfg, int count, double min_norm,
                                   std::uint64_t seed) {
  const TwoTankParams params = cfg.params();
  const NarxDims d = cfg.dims();
  const AffineNormalization nz = cfg.normalization();
  SobolStream sobol(cfg.nu + 2, seed);
  std::vector<Vec> out;
  out.reserve(count);
  for (long tries = 0; static_cast<int>(out.size()) < count; ++tries) {
    if (tries > 1000L * count + 10000) throw Error("could not sample enough regressors in the domain");
    if (auto t = tuple_from_unit(cfg, params, sobol.next())) {
      Vec x = nz.normalize_state(t->x, d);
      if (x.norm() > min_norm) out.push_back(std::move(x));
    }
  }
  return out;
}

}  // namespace narxmpc
