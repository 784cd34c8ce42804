#include "narxmpc/narx.hpp"

#include <cmath>
#include <string>

namespace narxmpc {

namespace {

void require_size(const Vec& v, Eigen::Index expected, const char* name) {
  if (v.size() != expected) {
    throw DimensionError(name, "expected length " + std::to_string(expected) + ", got " +
                                   std::to_string(v.size()));
  }
}

}  // namespace

NarxDims NarxDims::make(int p, int m, int nu) {
  if (p < 1) throw DimensionError("p", "output dimension must be >= 1");
  if (m < 1) throw DimensionError("m", "input dimension must be >= 1");
  if (nu < 1) throw DimensionError("nu", "lag must be >= 1");
  return NarxDims{p, m, nu};
}

RegressorState::RegressorState(Vec values, const NarxDims& dims)
    : values_(std::move(values)), dims_(dims) {
  require_size(values_, dims.n(), "x");
}

void NarxDynamics::jacobian(const Vec&, const Vec&, Mat&, Mat&) const {
  throw Error("dynamics map does not provide Jacobians");
}

FunctionDynamics::FunctionDynamics(NarxDims dims, OutputFn output, JacobianFn jacobian)
    : dims_(dims), output_(std::move(output)), jacobian_(std::move(jacobian)) {}

Vec FunctionDynamics::output(const Vec& x, const Vec& u) const { return output_(x, u); }

void FunctionDynamics::jacobian(const Vec& x, const Vec& u, Mat& jx, Mat& ju) const {
  if (!jacobian_) NarxDynamics::jacobian(x, u, jx, ju);
  jx.resize(dims_.p, dims_.n());
  ju.resize(dims_.p, dims_.m);
  jacobian_(x, u, jx, ju);
}

FiniteDifferenceDynamics::FiniteDifferenceDynamics(DynamicsPtr inner, double step)
    : inner_(std::move(inner)), step_(step) {
  if (!inner_) throw Error("FiniteDifferenceDynamics: null dynamics");
  if (!(step_ > 0.0)) throw Error("FiniteDifferenceDynamics: step must be positive");
}

void FiniteDifferenceDynamics::jacobian(const Vec& x, const Vec& u, Mat& jx, Mat& ju) const {
  const auto& d = dims();
  jx.resize(d.p, d.n());
  ju.resize(d.p, d.m);
  Vec xp = x, up = u;
  for (int j = 0; j < d.n(); ++j) {
    const double h = step_ * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + h;
    const Vec fp = inner_->output(xp, u);
    xp[j] = x[j] - h;
    const Vec fm = inner_->output(xp, u);
    xp[j] = x[j];
    jx.col(j) = (fp - fm) / (2.0 * h);
  }
  for (int j = 0; j < d.m; ++j) {
    const double h = step_ * std::max(1.0, std::abs(u[j]));
    up[j] = u[j] + h;
    const Vec fp = inner_->output(x, up);
    up[j] = u[j] - h;
    const Vec fm = inner_->output(x, up);
    up[j] = u[j];
    ju.col(j) = (fp - fm) / (2.0 * h);
  }
}

AffineNormalization::AffineNormalization(Vec y_ref, Vec u_ref, Vec y_scale, Vec u_scale)
    : y_ref_(std::move(y_ref)),
      u_ref_(std::move(u_ref)),
      y_scale_(std::move(y_scale)),
      u_scale_(std::move(u_scale)) {
  if (y_ref_.size() != y_scale_.size() || u_ref_.size() != u_scale_.size()) {
    throw ConfigError("normalization: reference and scale sizes differ");
  }
  if (y_ref_.size() == 0 || u_ref_.size() == 0) {
    throw ConfigError("normalization: empty reference");
  }
  if (!(y_scale_.array() > 0.0).all() || !(u_scale_.array() > 0.0).all()) {
    throw ConfigError("normalization: every scale entry must be strictly positive");
  }
}

AffineNormalization AffineNormalization::identity(const NarxDims& dims) {
  return {Vec::Zero(dims.p), Vec::Zero(dims.m), Vec::Ones(dims.p), Vec::Ones(dims.m)};
}

Vec AffineNormalization::normalize_output(const Vec& y) const {
  require_size(y, y_ref_.size(), "y");
  return ((y - y_ref_).array() / y_scale_.array()).matrix();
}

Vec AffineNormalization::denormalize_output(const Vec& y) const {
  require_size(y, y_ref_.size(), "y");
  return (y.array() * y_scale_.array()).matrix() + y_ref_;
}

Vec AffineNormalization::normalize_input(const Vec& u) const {
  require_size(u, u_ref_.size(), "u");
  return ((u - u_ref_).array() / u_scale_.array()).matrix();
}

Vec AffineNormalization::denormalize_input(const Vec& u) const {
  require_size(u, u_ref_.size(), "u");
  return (u.array() * u_scale_.array()).matrix() + u_ref_;
}

Vec AffineNormalization::normalize_state(const Vec& x, const NarxDims& dims) const {
  require_size(x, dims.n(), "x");
  Vec out(x.size());
  for (int k = 0; k < dims.nu; ++k) {
    out.segment(k * dims.p, dims.p) = normalize_output(x.segment(k * dims.p, dims.p));
  }
  for (int k = 0; k + 1 < dims.nu; ++k) {
    const int off = dims.input_block() + k * dims.m;
    out.segment(off, dims.m) = normalize_input(x.segment(off, dims.m));
  }
  return out;
}

Vec AffineNormalization::denormalize_state(const Vec& x, const NarxDims& dims) const {
  require_size(x, dims.n(), "x");
  Vec out(x.size());
  for (int k = 0; k < dims.nu; ++k) {
    out.segment(k * dims.p, dims.p) = denormalize_output(x.segment(k * dims.p, dims.p));
  }
  for (int k = 0; k + 1 < dims.nu; ++k) {
    const int off = dims.input_block() + k * dims.m;
    out.segment(off, dims.m) = denormalize_input(x.segment(off, dims.m));
  }
  return out;
}

Vec AffineNormalization::state_scale(const NarxDims& dims) const {
  Vec s(dims.n());
  for (int k = 0; k < dims.nu; ++k) s.segment(k * dims.p, dims.p) = y_scale_;
  for (int k = 0; k + 1 < dims.nu; ++k) s.segment(dims.input_block() + k * dims.m, dims.m) = u_scale_;
  return s;
}

NormalizedDynamics::NormalizedDynamics(DynamicsPtr raw, AffineNormalization normalization)
    : raw_(std::move(raw)), norm_(std::move(normalization)) {
  if (!raw_) throw Error("NormalizedDynamics: null dynamics");
  if (norm_.y_ref().size() != raw_->dims().p || norm_.u_ref().size() != raw_->dims().m) {
    throw DimensionError("normalization", "does not match the dynamics dimensions");
  }
}

Vec NormalizedDynamics::output(const Vec& x, const Vec& u) const {
  const auto& d = dims();
  return norm_.normalize_output(
      raw_->output(norm_.denormalize_state(x, d), norm_.denormalize_input(u)));
}

void NormalizedDynamics::jacobian(const Vec& x, const Vec& u, Mat& jx, Mat& ju) const {
  const auto& d = dims();
  Mat rjx, rju;
  raw_->jacobian(norm_.denormalize_state(x, d), norm_.denormalize_input(u), rjx, rju);
  const Vec ys_inv = norm_.y_scale().cwiseInverse();
  jx = ys_inv.asDiagonal() * rjx * norm_.state_scale(d).asDiagonal();
  ju = ys_inv.asDiagonal() * rju * norm_.u_scale().asDiagonal();
}

RegressorState build_regressor(std::span<const Vec> y_hist, std::span<const Vec> u_hist,
                               const NarxDims& dims) {
  if (static_cast<int>(y_hist.size()) != dims.nu) {
    throw DimensionError("y_hist", "expected " + std::to_string(dims.nu) + " outputs, got " +
                                       std::to_string(y_hist.size()));
  }
  if (static_cast<int>(u_hist.size()) != dims.nu - 1) {
    throw DimensionError("u_hist", "expected " + std::to_string(dims.nu - 1) + " inputs, got " +
                                       std::to_string(u_hist.size()));
  }
  Vec x(dims.n());
  for (int k = 0; k < dims.nu; ++k) {
    require_size(y_hist[k], dims.p, "y_hist");
    x.segment(k * dims.p, dims.p) = y_hist[k];
  }
  for (int k = 0; k + 1 < dims.nu; ++k) {
    require_size(u_hist[k], dims.m, "u_hist");
    x.segment(dims.input_block() + k * dims.m, dims.m) = u_hist[k];
  }
  return {std::move(x), dims};
}

Vec shift_regressor(const Vec& x, const Vec& y_next, const Vec& u, const NarxDims& dims) {
  require_size(x, dims.n(), "x");
  require_size(y_next, dims.p, "y");
  require_size(u, dims.m, "u");
  const int p = dims.p, m = dims.m, nu = dims.nu;
  Vec next(dims.n());
  next.head(p) = y_next;
  if (nu > 1) {
    next.segment(p, (nu - 1) * p) = x.head((nu - 1) * p);
    next.segment(nu * p, m) = u;
    if (nu > 2) next.segment(nu * p + m, (nu - 2) * m) = x.segment(nu * p, (nu - 2) * m);
  }
  return next;
}

LiftResult lift_step(const NarxDynamics& f, const RegressorState& x, const Vec& u) {
  const auto& d = f.dims();
  if (x.dims() != d) throw DimensionError("x", "regressor dimensions do not match the dynamics");
  require_size(u, d.m, "u");
  Vec y = f.output(x.values(), u);
  require_size(y, d.p, "f_y(x, u)");
  return {RegressorState(shift_regressor(x.values(), y, u, d), d), std::move(y)};
}

Vec output_projection(const Vec& x, const NarxDims& dims) {
  require_size(x, dims.n(), "x");
  return x.head(dims.p);
}

Rollout rollout(const NarxDynamics& f, const RegressorState& x0, std::span<const Vec> inputs) {
  if (inputs.empty()) throw DimensionError("u_seq", "horizon must be at least 1");
  Rollout r;
  r.states.reserve(inputs.size() + 1);
  r.outputs.reserve(inputs.size());
  r.states.push_back(x0);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    try {
      auto step = lift_step(f, r.states.back(), inputs[k]);
      r.outputs.push_back(std::move(step.y));
      r.states.push_back(std::move(step.next));
    } catch (const DimensionError&) {
      throw;
    } catch (const std::exception& e) {
      throw DynamicsError(e.what(), static_cast<int>(k));
    }
  }
  return r;
}

bool DomainBox::contains(const Vec& v, double tol) const {
  if (v.size() != lo.size()) return false;
  return ((v.array() >= lo.array() - tol) && (v.array() <= hi.array() + tol)).all();
}

std::vector<std::size_t> find_domain_excursions(std::span<const RegressorState> states,
                                                const DomainBox& omega, double tol) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!omega.contains(states[i].values(), tol)) out.push_back(i);
  }
  return out;
}

}  // namespace narxmpc
