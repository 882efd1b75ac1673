#pragma once

#include <functional>
#include <optional>

#include "pnp/common.hpp"
#include "pnp/linops.hpp"

namespace pnp::proximal {

/// Scaling matrix H in S^n_{++} and the geometry it induces:
/// <x,y>_H = x^T H y, ||x||_H = sqrt(x^T H x).
///
/// Three representations: identity, positive diagonal, and dense SPD. The
/// dense form keeps an eigendecomposition so H^{1/2}, H^{-1/2} and H^{-1} are
/// exact symmetric functions of H.
class Metric {
 public:
  enum class Kind { Identity, Diagonal, Dense };

  static Metric identity(Index n);
  static Metric diagonal(Vector d);
  static Metric dense(const DenseMatrix& h);

  Kind kind() const { return kind_; }
  Index size() const { return n_; }
  bool is_identity() const { return kind_ == Kind::Identity; }

  /// Diagonal of H for identity/diagonal metrics.
  std::optional<Vector> diagonal() const;
  DenseMatrix to_dense() const;

  Vector apply(const Vector& x) const;             // H x
  Vector solve(const Vector& x) const;             // H^{-1} x
  Vector apply_sqrt(const Vector& x) const;        // H^{1/2} x
  Vector apply_inv_sqrt(const Vector& x) const;    // H^{-1/2} x

  double inner(const Vector& x, const Vector& y) const;
  double norm(const Vector& x) const;

  /// ||H^{-1}||_2 = 1 / lambda_min(H).
  double inverse_spectral_norm() const;

  /// c H, for the scale freedom of (H, P).
  Metric scaled(double c) const;

 private:
  Metric() = default;

  Kind kind_ = Kind::Identity;
  Index n_ = 0;
  Vector diag_;             // Diagonal
  DenseMatrix eigvecs_;     // Dense
  Vector eigvals_;          // Dense, ascending
};

/// f(x) = 1/2 ||A x - b||_2^2.
struct QuadraticLoss {
  linops::OperatorPtr op;
  Vector b;

  QuadraticLoss(linops::OperatorPtr a, Vector obs);

  Index dim() const { return op->cols(); }
  double value(const Vector& x) const;
  Vector gradient(const Vector& x) const;
};

struct ProxOptions {
  enum class Method {
    Auto,         // closed form when A^T A and H are diagonal, else CG
    ClosedForm,   // requires diagonal A^T A and a non-dense metric
    ConjugateGradient,
    DenseDirect,  // Cholesky on the materialized system; test scale
  };
  Method method = Method::Auto;
  double cg_tolerance = 1e-10;  // relative residual
  int cg_max_iter = 500;
};

double h_norm(const Metric& metric, const Vector& x);

/// argmin_x 1/2 ||x - v||_H^2 + (1/rho) f(x), i.e. the solution of
/// (A^T A + rho H) x = A^T b + rho H v.
/// Throws ConvergenceError when CG misses its tolerance.
Vector prox_quadratic_scaled(const QuadraticLoss& loss, const Metric& metric, double rho,
                             const Vector& v, const ProxOptions& options = {});

/// Change of metric: given the Euclidean prox of gamma = g o H^{-1/2},
/// returns prox_{g,H}(y) = H^{-1/2} prox_gamma(H^{1/2} y).
Vector prox_metric_transform(const std::function<Vector(const Vector&)>& gamma_prox,
                             const Metric& metric, const Vector& y);

/// A rho for which f is rho-smooth w.r.t. H:
/// lambda_max(A^T A) * ||H^{-1}||_2.
double smoothness_constant(const QuadraticLoss& loss, const Metric& metric);

/// The loss beta = f o H^{-1/2}.
QuadraticLoss compose_with_inv_sqrt(const QuadraticLoss& loss, const Metric& metric);

}  // namespace pnp::proximal
