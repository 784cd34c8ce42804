#include "narxmpc/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace narxmpc {

double wendland_phi(double r) {
  if (r < 0.0 || std::isnan(r)) throw Error("wendland_phi: r must be >= 0");
  if (r >= 1.0) return 0.0;
  const double s = 1.0 - r;
  const double s2 = s * s;
  return s2 * s2 * s * (5.0 * r + 1.0) / 30.0;
}

double wendland_dphi(double r) {
  if (r < 0.0 || std::isnan(r)) throw Error("wendland_dphi: r must be >= 0");
  if (r >= 1.0) return 0.0;
  const double s = 1.0 - r;
  const double s2 = s * s;
  return -r * s2 * s2;
}

KernelSpec KernelSpec::wendland(int input_dim, double lengthscale) {
  KernelSpec s;
  s.family = KernelFamily::wendland_deg5;
  s.lengthscale = lengthscale;
  s.input_dim = input_dim;
  return s;
}

void KernelSpec::validate() const {
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale)) {
    throw ConfigError("kernel lengthscale must be positive, got " + std::to_string(lengthscale));
  }
  if (input_dim < 1) throw ConfigError("kernel input dimension must be >= 1");
  if (family == KernelFamily::custom) {
    if (!profile) throw ConfigError("custom kernel family requires a radial profile");
    if (profile(1.0) != 0.0 || profile(1.5) != 0.0) {
      throw ConfigError("custom radial profile must vanish for r >= 1");
    }
  }
}

double KernelSpec::phi(double r) const {
  return family == KernelFamily::wendland_deg5 ? wendland_phi(r) : (r >= 1.0 ? 0.0 : profile(r));
}

double KernelSpec::dphi(double r) const {
  if (family == KernelFamily::wendland_deg5) return wendland_dphi(r);
  if (!profile_derivative) throw Error("custom radial profile has no derivative");
  return r >= 1.0 ? 0.0 : profile_derivative(r);
}

double kernel_eval(const KernelSpec& spec, const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw DimensionError("xi", "kernel arguments differ in length");
  return spec.phi((a - b).norm() / spec.lengthscale);
}

Vec make_site(const Vec& x, const Vec& u) {
  Vec s(x.size() + u.size());
  s << x, u;
  return s;
}

void Dataset::validate() const {
  const Eigen::Index d = dims.site_dim();
  if (sites.rows() < 1) throw DimensionError("sites", "dataset must contain at least one sample");
  if (sites.cols() != d) {
    throw DimensionError("sites", "expected " + std::to_string(d) + " columns, got " +
                                      std::to_string(sites.cols()));
  }
  if (targets.rows() != sites.rows() || targets.cols() != dims.p) {
    throw DimensionError("targets", "expected " + std::to_string(sites.rows()) + "x" +
                                        std::to_string(dims.p));
  }
  if (!sites.allFinite() || !targets.allFinite()) throw Error("dataset contains non-finite values");
  for (Eigen::Index i = 0; i < sites.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < sites.rows(); ++j) {
      if ((sites.row(i) - sites.row(j)).norm() <= 1e-10) {
        throw Error("dataset sites " + std::to_string(i) + " and " + std::to_string(j) +
                    " coincide");
      }
    }
  }
  if (contains_origin) {
    const auto o = origin_index();
    if (!o) throw Error("dataset is flagged as containing the origin but no site is at 0");
    if (targets.row(*o).norm() >= 1e-10) throw Error("dataset origin sample has a nonzero target");
  }
}

std::optional<Eigen::Index> Dataset::origin_index(double tol) const {
  for (Eigen::Index i = 0; i < sites.rows(); ++i) {
    if (sites.row(i).norm() < tol) return i;
  }
  return std::nullopt;
}

KernelInterpolant::KernelInterpolant(KernelSpec spec, Dataset data, double jitter)
    : spec_(std::move(spec)), data_(std::move(data)), jitter_(jitter) {
  spec_.validate();
  data_.validate();
  if (spec_.input_dim != data_.dims.site_dim()) {
    throw DimensionError("kernel", "input dimension " + std::to_string(spec_.input_dim) +
                                       " does not match site dimension " +
                                       std::to_string(data_.dims.site_dim()));
  }
  if (!(jitter_ >= 0.0)) throw ConfigError("jitter must be >= 0");

  const Eigen::Index D = data_.size();
  Mat K(D, D);
  for (Eigen::Index i = 0; i < D; ++i) {
    K(i, i) = spec_.diagonal() + jitter_;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double r = (data_.sites.row(i) - data_.sites.row(j)).norm() / spec_.lengthscale;
      K(i, j) = K(j, i) = spec_.phi(r);
    }
  }
  llt_.compute(K);
  if (llt_.info() != Eigen::Success) {
    const double pivot = Eigen::LDLT<Mat>(K).vectorD().minCoeff();
    throw FactorizationError("kernel matrix is not numerically positive definite (smallest pivot " +
                                 std::to_string(pivot) +
                                 "); increase the jitter or reduce the lengthscale",
                             pivot);
  }
  coeffs_ = llt_.solve(data_.targets);
  sites_t_ = data_.sites.transpose();
}

Vec KernelInterpolant::kernel_vector(const Vec& site) const {
  if (site.size() != data_.sites.cols()) {
    throw DimensionError("xi", "expected length " + std::to_string(data_.sites.cols()));
  }
  const Eigen::Index D = data_.size();
  Vec k(D);
  const double inv_ell = 1.0 / spec_.lengthscale;
  for (Eigen::Index i = 0; i < D; ++i) {
    const double r = (sites_t_.col(i) - site).norm() * inv_ell;
    k[i] = r >= 1.0 ? 0.0 : spec_.phi(r);
  }
  return k;
}

Vec KernelInterpolant::evaluate(const Vec& site, Mat* grad) const {
  const Eigen::Index dim = sites_t_.rows();
  if (site.size() != dim) throw DimensionError("xi", "expected length " + std::to_string(dim));
  const Eigen::Index D = data_.size(), p = data_.dims.p;
  const double ell = spec_.lengthscale, inv_ell = 1.0 / ell, ell2 = ell * ell;
  const bool wendland = spec_.family == KernelFamily::wendland_deg5;
  Vec value = Vec::Zero(p);
  if (grad) grad->setZero(p, dim);
  Vec diff(dim);
  const double* xi = site.data();
  for (Eigen::Index i = 0; i < D; ++i) {
    const double* s = sites_t_.data() + i * dim;
    double d2 = 0.0;
    for (Eigen::Index j = 0; j < dim; ++j) {
      diff[j] = xi[j] - s[j];
      d2 += diff[j] * diff[j];
    }
    if (d2 >= ell2) continue;
    const double r = std::sqrt(d2) * inv_ell;
    double phi, scale;
    if (wendland) {
      // d/dxi phi(|xi - xi_i| / ell) = phi'(r) / (r ell^2) (xi - xi_i); the Wendland
      // profile has phi'(r)/r = -(1-r)^4, finite at r = 0.
      const double t = 1.0 - r, t4 = (t * t) * (t * t);
      phi = t4 * t * (5.0 * r + 1.0) / 30.0;
      scale = -t4 / ell2;
    } else {
      phi = spec_.phi(r);
      scale = grad && r > 0.0 ? spec_.dphi(r) / (r * ell2) : 0.0;
    }
    if (p == 1) {
      const double a = coeffs_(i, 0);
      value[0] += a * phi;
      if (grad) grad->row(0).noalias() += (a * scale) * diff.transpose();
    } else {
      value.noalias() += phi * coeffs_.row(i).transpose();
      if (grad) grad->noalias() += coeffs_.row(i).transpose() * (scale * diff).transpose();
    }
  }
  return value;
}

Vec KernelInterpolant::predict(const Vec& site) const { return evaluate(site, nullptr); }

Mat KernelInterpolant::predict_gradient(const Vec& site) const {
  Mat grad;
  evaluate(site, &grad);
  return grad;
}

Vec KernelInterpolant::output(const Vec& x, const Vec& u) const { return predict(make_site(x, u)); }

void KernelInterpolant::jacobian(const Vec& x, const Vec& u, Mat& jx, Mat& ju) const {
  output_and_jacobian(x, u, jx, ju);
}

Vec KernelInterpolant::output_and_jacobian(const Vec& x, const Vec& u, Mat& jx, Mat& ju) const {
  Mat g;
  Vec y = evaluate(make_site(x, u), &g);
  jx = g.leftCols(x.size());
  ju = g.rightCols(u.size());
  return y;
}

PowerValue KernelInterpolant::power_function(const Vec& site) const {
  const Vec k = kernel_vector(site);
  const Vec v = llt_.matrixL().solve(k);
  // Negative values are cancellation noise.
  const double p2 = std::max(0.0, spec_.diagonal() - v.squaredNorm());
  return {std::sqrt(p2), jitter_ != 0.0};
}

double KernelInterpolant::rkhs_norm() const {
  double total = 0.0;
  for (Eigen::Index c = 0; c < coeffs_.cols(); ++c) {
    total += std::max(0.0, data_.targets.col(c).dot(coeffs_.col(c)));
  }
  return std::sqrt(total);
}

double KernelInterpolant::max_site_residual() const {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < data_.size(); ++i) {
    const Vec r = predict(data_.sites.row(i).transpose()) - data_.targets.row(i).transpose();
    worst = std::max(worst, r.norm());
  }
  return worst;
}

KernelInterpolant fit_interpolant(const KernelSpec& spec, const Dataset& data, double jitter) {
  return KernelInterpolant(spec, data, jitter);
}

FillDistance fill_distance(const Mat& sites, const Mat& probes) {
  if (probes.rows() == 0) throw Error("fill_distance: empty probe set");
  if (sites.rows() == 0) throw Error("fill_distance: empty site set");
  if (sites.cols() != probes.cols()) throw DimensionError("probes", "dimension differs from sites");
  FillDistance out;
  out.probe_count = static_cast<std::size_t>(probes.rows());
  for (Eigen::Index j = 0; j < probes.rows(); ++j) {
    const double d = (sites.rowwise() - probes.row(j)).rowwise().squaredNorm().minCoeff();
    if (d > out.value * out.value || out.worst_probe < 0) {
      out.value = std::sqrt(d);
      out.worst_probe = j;
    }
  }
  return out;
}

Mat probe_grid(const DomainBox& box, int per_axis) {
  if (per_axis < 1) throw Error("probe_grid: need at least one point per axis");
  const auto d = box.lo.size();
  Eigen::Index total = 1;
  for (Eigen::Index a = 0; a < d; ++a) total *= per_axis;
  Mat grid(total, d);
  for (Eigen::Index i = 0; i < total; ++i) {
    Eigen::Index idx = i;
    for (Eigen::Index a = 0; a < d; ++a) {
      const int k = static_cast<int>(idx % per_axis);
      idx /= per_axis;
      const double t = per_axis == 1 ? 0.5 : static_cast<double>(k) / (per_axis - 1);
      grid(i, a) = box.lo[a] + t * (box.hi[a] - box.lo[a]);
    }
  }
  return grid;
}

ErrorConstants estimate_error_constants(const NarxDynamics& truth, const NarxDynamics& model,
                                        std::span<const StateInputSample> samples) {
  constexpr double tiny = 1e-8;
  if (samples.empty()) throw Error("estimate_error_constants: no samples");
  const std::size_t S = samples.size();
  std::vector<double> res(S), nx(S), nu(S);
  ErrorConstants out;
  out.sample_count = S;
  for (std::size_t i = 0; i < S; ++i) {
    const auto& s = samples[i];
    res[i] = (truth.output(s.x, s.u) - model.output(s.x, s.u)).norm();
    nx[i] = s.x.norm();
    nu[i] = s.u.norm();
    if (nx[i] <= tiny && nu[i] <= tiny && res[i] > 1e-10) {
      throw Error("equilibrium mismatch: residual " + std::to_string(res[i]) +
                  " at the origin rules out a proportional error bound");
    }
    if (nx[i] + nu[i] > 0.0) out.max_residual_ratio = std::max(out.max_residual_ratio, res[i] / (nx[i] + nu[i]));
  }

  // c_u large enough to cover every sample on its own (where ||u|| > 0).
  double cu_hi = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    if (nu[i] > tiny) cu_hi = std::max(cu_hi, res[i] / nu[i]);
  }
  std::vector<double> grid{0.0};
  if (cu_hi > 0.0) {
    constexpr int points = 64;
    const double lo = std::log(cu_hi * 1e-6), hi = std::log(cu_hi);
    for (int k = 0; k < points; ++k) grid.push_back(std::exp(lo + (hi - lo) * k / (points - 1)));
    grid.back() = cu_hi;
  }

  double best = std::numeric_limits<double>::infinity();
  for (const double cu : grid) {
    double cx = 0.0;
    std::size_t arg = 0;
    bool feasible = true;
    for (std::size_t i = 0; i < S; ++i) {
      const double excess = res[i] - cu * nu[i];
      if (nx[i] > tiny) {
        const double need = excess / nx[i];
        if (need > cx) {
          cx = need;
          arg = i;
        }
      } else if (excess > 1e-12) {
        feasible = false;
        break;
      }
    }
    if (!feasible) continue;
    // Small slack keeps the defining inequality exact under roundoff.
    cx = cx > 0.0 ? std::nextafter(cx, std::numeric_limits<double>::infinity()) : 0.0;
    if (cx + cu < best) {
      best = cx + cu;
      out.c_x = cx;
      out.c_u = cu;
      out.worst_sample = arg;
    }
  }
  if (!std::isfinite(best)) throw Error("estimate_error_constants: no feasible (c_x, c_u) pair");
  return out;
}

double estimate_lipschitz(const NarxDynamics& model, std::span<const StatePair> pairs) {
  double L = 0.0;
  for (const auto& pr : pairs) {
    const double dx = (pr.x - pr.x_prime).norm();
    if (dx <= 1e-8) continue;
    L = std::max(L, (model.output(pr.x, pr.u) - model.output(pr.x_prime, pr.u)).norm() / dx);
  }
  return L;
}

}  // namespace narxmpc
