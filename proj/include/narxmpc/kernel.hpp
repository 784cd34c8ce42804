#pragma once

// Kernel interpolation surrogates with compactly supported radial kernels.
//
// The interpolant of data (xi_i, y_i), i = 1..D, is
//
//   s(xi) = k_X(xi)^T (K + jitter I)^{-1} Y,   K_ij = k(xi_i, xi_j),
//
// and with jitter = 0 its pointwise error against any f in the native space
// is bounded by P(xi) * ||f||_H, with the power function
//
//   P(xi)^2 = k(xi, xi) - k_X(xi)^T K^{-1} k_X(xi).

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>

#include "narxmpc/narx.hpp"

namespace narxmpc {

// phi(r) = (1/30) (1-r)^5 (5r+1) on [0, 1], zero beyond. Throws for r < 0.
double wendland_phi(double r);
// phi'(r) = -r (1-r)^4 on [0, 1], zero beyond.
double wendland_dphi(double r);

enum class KernelFamily { wendland_deg5, custom };

struct KernelSpec {
  KernelFamily family = KernelFamily::wendland_deg5;
  double lengthscale = 1.0;
  int input_dim = 0;
  // Custom radial profile on r = ||a - b|| / lengthscale. Must vanish for
  // r >= 1. The derivative is needed only for Jacobians.
  std::function<double(double)> profile;
  std::function<double(double)> profile_derivative;

  static KernelSpec wendland(int input_dim, double lengthscale = 1.0);

  // Throws ConfigError on a non-positive lengthscale or a missing profile.
  void validate() const;
  double phi(double r) const;
  double dphi(double r) const;
  double diagonal() const { return phi(0.0); }
};

double kernel_eval(const KernelSpec& spec, const Vec& a, const Vec& b);

// Data sites in normalized coordinates, one row per sample.
struct Dataset {
  NarxDims dims;
  Mat sites;    // D x (n+m)
  Mat targets;  // D x p
  AffineNormalization normalization;
  bool contains_origin = false;

  Eigen::Index size() const noexcept { return sites.rows(); }
  // Checks shapes, pairwise distinct sites and the origin flag.
  void validate() const;
  // Index of a site at the origin, if any.
  std::optional<Eigen::Index> origin_index(double tol = 1e-10) const;
};

Vec make_site(const Vec& x, const Vec& u);

struct PowerValue {
  double value = 0.0;
  // True when the model was fitted with jitter > 0; the bound is then not a
  // certificate for the exact interpolant.
  bool degraded = false;
};

class KernelInterpolant final : public NarxDynamics {
 public:
  KernelInterpolant(KernelSpec spec, Dataset data, double jitter);

  const NarxDims& dims() const override { return data_.dims; }
  Vec output(const Vec& x, const Vec& u) const override;
  bool differentiable() const override { return true; }
  void jacobian(const Vec& x, const Vec& u, Mat& jx, Mat& ju) const override;
  Vec output_and_jacobian(const Vec& x, const Vec& u, Mat& jx, Mat& ju) const override;

  Vec predict(const Vec& site) const;
  // d predict / d site, p x (n+m).
  Mat predict_gradient(const Vec& site) const;
  PowerValue power_function(const Vec& site) const;
  // sqrt(sum_c Y_c^T (K + jitter I)^{-1} Y_c).
  double rkhs_norm() const;
  // max_i ||predict(xi_i) - y_i||.
  double max_site_residual() const;
  // Kernel vector k_X(site).
  Vec kernel_vector(const Vec& site) const;

  const KernelSpec& spec() const noexcept { return spec_; }
  const Dataset& data() const noexcept { return data_; }
  const Mat& coefficients() const noexcept { return coeffs_; }
  double jitter() const noexcept { return jitter_; }

 private:
  KernelSpec spec_;
  Dataset data_;
  double jitter_;
  Eigen::LLT<Mat> llt_;
  Mat coeffs_;  // D x p
  Mat sites_t_;  // sites as columns, for contiguous access

  // Value and, if grad is given, gradient at a site in one pass over the data.
  Vec evaluate(const Vec& site, Mat* grad) const;
};

// Throws FactorizationError when K + jitter I is not numerically positive
// definite.
KernelInterpolant fit_interpolant(const KernelSpec& spec, const Dataset& data, double jitter = 0.0);

struct FillDistance {
  double value = 0.0;
  std::size_t probe_count = 0;
  Eigen::Index worst_probe = -1;
};

// Probe approximation of sup_xi min_i ||xi - xi_i||. Probes are rows.
FillDistance fill_distance(const Mat& sites, const Mat& probes);

// Regular probe grid with `per_axis` points along every axis of the box.
Mat probe_grid(const DomainBox& box, int per_axis);

struct ErrorConstants {
  double c_x = 0.0;
  double c_u = 0.0;
  double lipschitz_L = 0.0;
  std::size_t sample_count = 0;
  // max over samples of residual / (||x|| + ||u||).
  double max_residual_ratio = 0.0;
  // Sample attaining the c_x constraint.
  std::size_t worst_sample = 0;

  double bound(const Vec& x, const Vec& u) const { return c_x * x.norm() + c_u * u.norm(); }
};

// Smallest (c_x, c_u) over a log grid of c_u such that
// ||truth(x,u) - model(x,u)|| <= c_x ||x|| + c_u ||u|| on every sample.
// Throws Error("equilibrium mismatch") if the residual at (0, 0) exceeds 1e-10.
ErrorConstants estimate_error_constants(const NarxDynamics& truth, const NarxDynamics& model,
                                        std::span<const StateInputSample> samples);

struct StatePair {
  Vec x;
  Vec x_prime;
  Vec u;
};

// Largest sampled difference quotient ||f(x,u) - f(x',u)|| / ||x - x'||.
// This is a lower bound on the Lipschitz constant.
double estimate_lipschitz(const NarxDynamics& model, std::span<const StatePair> pairs);

}  // namespace narxmpc
