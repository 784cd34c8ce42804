#pragma once

// NARX systems in regressor (lifted state-space) form.
//
// The regressor stacks the nu most recent outputs and the nu-1 most recent
// inputs, newest first:
//
//   x(k) = [y(k); y(k-1); ...; y(k-nu+1); u(k-1); ...; u(k-nu+1)]
//
// so that n = nu*p + (nu-1)*m. One step of the lifted dynamics writes the new
// output on top, shifts the output history down by one block, puts the applied
// input at the head of the input history and drops the oldest input.

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "narxmpc/errors.hpp"

namespace narxmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct NarxDims {
  int p = 1;   // outputs
  int m = 1;   // inputs
  int nu = 1;  // lag

  // Throws DimensionError unless p, m, nu >= 1.
  static NarxDims make(int p, int m, int nu);

  int n() const noexcept { return nu * p + (nu - 1) * m; }
  // Dimension of an interpolation site (x, u).
  int site_dim() const noexcept { return n() + m; }
  // Offset of the input history block inside the regressor.
  int input_block() const noexcept { return nu * p; }

  bool operator==(const NarxDims&) const = default;
};

class RegressorState {
 public:
  RegressorState() = default;
  RegressorState(Vec values, const NarxDims& dims);

  static RegressorState zero(const NarxDims& dims) { return {Vec::Zero(dims.n()), dims}; }

  const Vec& values() const noexcept { return values_; }
  const NarxDims& dims() const noexcept { return dims_; }
  Eigen::Index size() const noexcept { return values_.size(); }
  double operator[](Eigen::Index i) const { return values_[i]; }

  // y(k), the first p entries.
  Vec output() const { return values_.head(dims_.p); }

 private:
  Vec values_;
  NarxDims dims_;
};

// One-step output map y+ = f_y(x, u). Implementations must be deterministic
// and safe to call concurrently.
class NarxDynamics {
 public:
  virtual ~NarxDynamics() = default;

  virtual const NarxDims& dims() const = 0;
  virtual Vec output(const Vec& x, const Vec& u) const = 0;

  // Whether jacobian() is implemented.
  virtual bool differentiable() const { return false; }
  // jx is p-by-n, ju is p-by-m.
  virtual void jacobian(const Vec& x, const Vec& u, Mat& jx, Mat& ju) const;
  // Output and Jacobians in one call; override when they share work.
  virtual Vec output_and_jacobian(const Vec& x, const Vec& u, Mat& jx, Mat& ju) const {
    jacobian(x, u, jx, ju);
    return output(x, u);
  }
};

using DynamicsPtr = std::shared_ptr<const NarxDynamics>;

// Dynamics defined by callables. The Jacobian callable is optional.
class FunctionDynamics final : public NarxDynamics {
 public:
  using OutputFn = std::function<Vec(const Vec&, const Vec&)>;
  using JacobianFn = std::function<void(const Vec&, const Vec&, Mat&, Mat&)>;

  FunctionDynamics(NarxDims dims, OutputFn output, JacobianFn jacobian = {});

  const NarxDims& dims() const override { return dims_; }
  Vec output(const Vec& x, const Vec& u) const override;
  bool differentiable() const override { return static_cast<bool>(jacobian_); }
  void jacobian(const Vec& x, const Vec& u, Mat& jx, Mat& ju) const override;

 private:
  NarxDims dims_;
  OutputFn output_;
  JacobianFn jacobian_;
};

// Adds central finite-difference Jacobians to a dynamics map that has none.
class FiniteDifferenceDynamics final : public NarxDynamics {
 public:
  explicit FiniteDifferenceDynamics(DynamicsPtr inner, double step = 1e-6);

  const NarxDims& dims() const override { return inner_->dims(); }
  Vec output(const Vec& x, const Vec& u) const override { return inner_->output(x, u); }
  bool differentiable() const override { return true; }
  void jacobian(const Vec& x, const Vec& u, Mat& jx, Mat& ju) const override;

 private:
  DynamicsPtr inner_;
  double step_;
};

// Shift to a reference and rescale, componentwise:
//   y_n = (y - y_ref) / y_scale,  u_n = (u - u_ref) / u_scale.
class AffineNormalization {
 public:
  AffineNormalization() = default;
  // Throws ConfigError for non-positive scales or mismatched sizes.
  AffineNormalization(Vec y_ref, Vec u_ref, Vec y_scale, Vec u_scale);

  static AffineNormalization identity(const NarxDims& dims);

  const Vec& y_ref() const noexcept { return y_ref_; }
  const Vec& u_ref() const noexcept { return u_ref_; }
  const Vec& y_scale() const noexcept { return y_scale_; }
  const Vec& u_scale() const noexcept { return u_scale_; }

  Vec normalize_output(const Vec& y) const;
  Vec denormalize_output(const Vec& y) const;
  Vec normalize_input(const Vec& u) const;
  Vec denormalize_input(const Vec& u) const;
  // Regressors are normalized block by block.
  Vec normalize_state(const Vec& x, const NarxDims& dims) const;
  Vec denormalize_state(const Vec& x, const NarxDims& dims) const;
  // Per-entry scale of a regressor (used for chain rules).
  Vec state_scale(const NarxDims& dims) const;

 private:
  Vec y_ref_, u_ref_, y_scale_, u_scale_;
};

// Presents raw-unit dynamics in normalized coordinates.
class NormalizedDynamics final : public NarxDynamics {
 public:
  NormalizedDynamics(DynamicsPtr raw, AffineNormalization normalization);

  const NarxDims& dims() const override { return raw_->dims(); }
  Vec output(const Vec& x, const Vec& u) const override;
  bool differentiable() const override { return raw_->differentiable(); }
  void jacobian(const Vec& x, const Vec& u, Mat& jx, Mat& ju) const override;

  const AffineNormalization& normalization() const noexcept { return norm_; }

 private:
  DynamicsPtr raw_;
  AffineNormalization norm_;
};

// Histories are newest first: y_hist[0] = y(k), u_hist[0] = u(k-1).
RegressorState build_regressor(std::span<const Vec> y_hist, std::span<const Vec> u_hist,
                               const NarxDims& dims);

struct LiftResult {
  RegressorState next;
  Vec y;
};

// x+ = F_x(x, u). Ω membership is not checked here; see find_domain_excursions().
LiftResult lift_step(const NarxDynamics& f, const RegressorState& x, const Vec& u);

// The shift part of F_x with a given new output y+.
Vec shift_regressor(const Vec& x, const Vec& y_next, const Vec& u, const NarxDims& dims);

Vec output_projection(const Vec& x, const NarxDims& dims);

struct Rollout {
  std::vector<RegressorState> states;  // N+1, states[0] = x0
  std::vector<Vec> outputs;            // N, outputs[k] = y(k+1)
};

// Dynamics failures are rethrown as DynamicsError carrying the step index.
Rollout rollout(const NarxDynamics& f, const RegressorState& x0, std::span<const Vec> inputs);

struct StateInputSample {
  Vec x;
  Vec u;
};

// Axis-aligned box, used both for Ω (regressors) and for Ω×U (sites).
struct DomainBox {
  Vec lo, hi;
  bool contains(const Vec& v, double tol = 0.0) const;
};

// Indices of states lying outside the box.
std::vector<std::size_t> find_domain_excursions(std::span<const RegressorState> states,
                                                const DomainBox& omega, double tol = 1e-12);

}  // namespace narxmpc
