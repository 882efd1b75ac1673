#include "pnp/proximal.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

namespace pnp::proximal {

Metric Metric::identity(Index n) {
  Metric m;
  m.kind_ = Kind::Identity;
  m.n_ = n;
  return m;
}

Metric Metric::diagonal(Vector d) {
  if (d.size() == 0 || !d.allFinite() || d.minCoeff() <= 0.0) {
    throw std::invalid_argument("Metric::diagonal: entries must be finite and positive");
  }
  Metric m;
  m.kind_ = Kind::Diagonal;
  m.n_ = d.size();
  m.diag_ = std::move(d);
  return m;
}

Metric Metric::dense(const DenseMatrix& h) {
  if (h.rows() != h.cols()) throw DimensionError("Metric::dense: matrix is not square");
  if (!h.allFinite()) throw std::invalid_argument("Metric::dense: non-finite entries");
  const double scale = std::max(h.cwiseAbs().maxCoeff(), 1e-300);
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw std::invalid_argument("Metric::dense: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<DenseMatrix> solver(0.5 * (h + h.transpose()));
  if (solver.info() != Eigen::Success || solver.eigenvalues().minCoeff() <= 0.0) {
    throw std::invalid_argument("Metric::dense: matrix is not positive definite");
  }
  Metric m;
  m.kind_ = Kind::Dense;
  m.n_ = h.rows();
  m.eigvals_ = solver.eigenvalues();
  m.eigvecs_ = solver.eigenvectors();
  return m;
}

std::optional<Vector> Metric::diagonal() const {
  switch (kind_) {
    case Kind::Identity:
      return Vector::Ones(n_);
    case Kind::Diagonal:
      return diag_;
    case Kind::Dense:
      break;
  }
  return std::nullopt;
}

DenseMatrix Metric::to_dense() const {
  switch (kind_) {
    case Kind::Identity:
      return DenseMatrix::Identity(n_, n_);
    case Kind::Diagonal:
      return diag_.asDiagonal();
    case Kind::Dense:
      break;
  }
  return eigvecs_ * eigvals_.asDiagonal() * eigvecs_.transpose();
}

namespace {
template <typename F>
Vector spectral_apply(const DenseMatrix& q, const Vector& lambda, const Vector& x, F&& f) {
  Vector c = q.transpose() * x;
  for (Index i = 0; i < c.size(); ++i) c[i] *= f(lambda[i]);
  return q * c;
}
}  // namespace

Vector Metric::apply(const Vector& x) const {
  require_size(x.size(), n_, "Metric::apply");
  switch (kind_) {
    case Kind::Identity:
      return x;
    case Kind::Diagonal:
      return diag_.cwiseProduct(x);
    case Kind::Dense:
      break;
  }
  return spectral_apply(eigvecs_, eigvals_, x, [](double l) { return l; });
}

Vector Metric::solve(const Vector& x) const {
  require_size(x.size(), n_, "Metric::solve");
  switch (kind_) {
    case Kind::Identity:
      return x;
    case Kind::Diagonal:
      return x.cwiseQuotient(diag_);
    case Kind::Dense:
      break;
  }
  return spectral_apply(eigvecs_, eigvals_, x, [](double l) { return 1.0 / l; });
}

Vector Metric::apply_sqrt(const Vector& x) const {
  require_size(x.size(), n_, "Metric::apply_sqrt");
  switch (kind_) {
    case Kind::Identity:
      return x;
    case Kind::Diagonal:
      return diag_.cwiseSqrt().cwiseProduct(x);
    case Kind::Dense:
      break;
  }
  return spectral_apply(eigvecs_, eigvals_, x, [](double l) { return std::sqrt(l); });
}

Vector Metric::apply_inv_sqrt(const Vector& x) const {
  require_size(x.size(), n_, "Metric::apply_inv_sqrt");
  switch (kind_) {
    case Kind::Identity:
      return x;
    case Kind::Diagonal:
      return x.cwiseQuotient(diag_.cwiseSqrt());
    case Kind::Dense:
      break;
  }
  return spectral_apply(eigvecs_, eigvals_, x, [](double l) { return 1.0 / std::sqrt(l); });
}

double Metric::inner(const Vector& x, const Vector& y) const {
  require_size(y.size(), n_, "Metric::inner");
  return x.dot(apply(y));
}

double Metric::norm(const Vector& x) const { return std::sqrt(std::max(0.0, inner(x, x))); }

double Metric::inverse_spectral_norm() const {
  switch (kind_) {
    case Kind::Identity:
      return 1.0;
    case Kind::Diagonal:
      return 1.0 / diag_.minCoeff();
    case Kind::Dense:
      break;
  }
  return 1.0 / eigvals_.minCoeff();
}

Metric Metric::scaled(double c) const {
  if (!(c > 0.0)) throw std::invalid_argument("Metric::scaled: factor must be positive");
  switch (kind_) {
    case Kind::Identity:
      return diagonal(Vector::Constant(n_, c));
    case Kind::Diagonal:
      return diagonal(c * diag_);
    case Kind::Dense:
      break;
  }
  Metric m = *this;
  m.eigvals_ *= c;
  return m;
}

// ---------------------------------------------------------------------------

QuadraticLoss::QuadraticLoss(linops::OperatorPtr a, Vector obs) : op(std::move(a)), b(std::move(obs)) {
  if (!op) throw std::invalid_argument("QuadraticLoss: null operator");
  require_size(b.size(), op->rows(), "QuadraticLoss observation");
}

double QuadraticLoss::value(const Vector& x) const {
  return 0.5 * (op->apply(x) - b).squaredNorm();
}

Vector QuadraticLoss::gradient(const Vector& x) const { return op->apply_adjoint(op->apply(x) - b); }

double h_norm(const Metric& metric, const Vector& x) { return metric.norm(x); }

namespace {

Vector conjugate_gradient(const QuadraticLoss& loss, const Metric& metric, double rho,
                          const Vector& rhs, Vector x, const ProxOptions& options) {
  auto system = [&](const Vector& p) -> Vector {
    return loss.op->apply_adjoint(loss.op->apply(p)) + rho * metric.apply(p);
  };
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) return Vector::Zero(rhs.size());
  Vector r = rhs - system(x);
  Vector p = r;
  double rr = r.squaredNorm();
  for (int it = 0; it < options.cg_max_iter; ++it) {
    if (std::sqrt(rr) <= options.cg_tolerance * rhs_norm) return x;
    const Vector q = system(p);
    const double alpha = rr / p.dot(q);
    x += alpha * p;
    r -= alpha * q;
    const double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  if (std::sqrt(rr) <= options.cg_tolerance * rhs_norm) return x;
  throw ConvergenceError("prox_quadratic_scaled: CG did not converge in " +
                             std::to_string(options.cg_max_iter) + " iterations",
                         std::sqrt(rr) / rhs_norm);
}

}  // namespace

Vector prox_quadratic_scaled(const QuadraticLoss& loss, const Metric& metric, double rho,
                             const Vector& v, const ProxOptions& options) {
  if (!(rho > 0.0)) throw std::invalid_argument("prox_quadratic_scaled: rho must be positive");
  require_size(v.size(), loss.dim(), "prox_quadratic_scaled input");
  require_size(metric.size(), loss.dim(), "prox_quadratic_scaled metric");

  const Vector rhs = loss.op->apply_adjoint(loss.b) + rho * metric.apply(v);

  using Method = ProxOptions::Method;
  Method method = options.method;
  const auto gram = (method == Method::Auto || method == Method::ClosedForm)
                        ? loss.op->gram_diagonal()
                        : std::nullopt;
  const auto hdiag = metric.diagonal();
  if (method == Method::Auto) {
    method = (gram && hdiag) ? Method::ClosedForm : Method::ConjugateGradient;
  }

  switch (method) {
    case Method::ClosedForm: {
      if (!gram || !hdiag) {
        throw std::invalid_argument("prox_quadratic_scaled: closed form needs diagonal A^T A and H");
      }
      return rhs.cwiseQuotient(*gram + rho * *hdiag);
    }
    case Method::DenseDirect: {
      const DenseMatrix a = loss.op->to_dense();
      const DenseMatrix system = a.transpose() * a + rho * metric.to_dense();
      Eigen::LLT<DenseMatrix> llt(system);
      if (llt.info() != Eigen::Success) {
        throw std::runtime_error("prox_quadratic_scaled: system is not positive definite");
      }
      return llt.solve(rhs);
    }
    case Method::ConjugateGradient:
    case Method::Auto:
      break;
  }
  return conjugate_gradient(loss, metric, rho, rhs, v, options);
}

Vector prox_metric_transform(const std::function<Vector(const Vector&)>& gamma_prox,
                             const Metric& metric, const Vector& y) {
  require_size(y.size(), metric.size(), "prox_metric_transform");
  return metric.apply_inv_sqrt(gamma_prox(metric.apply_sqrt(y)));
}

double smoothness_constant(const QuadraticLoss& loss, const Metric& metric) {
  require_size(metric.size(), loss.dim(), "smoothness_constant");
  return loss.op->gram_max_eigenvalue() * metric.inverse_spectral_norm();
}

QuadraticLoss compose_with_inv_sqrt(const QuadraticLoss& loss, const Metric& metric) {
  require_size(metric.size(), loss.dim(), "compose_with_inv_sqrt");
  linops::OperatorPtr inv_sqrt;
  switch (metric.kind()) {
    case Metric::Kind::Identity:
      return loss;
    case Metric::Kind::Diagonal:
      inv_sqrt = std::make_shared<linops::DiagonalOperator>(metric.diagonal()->cwiseSqrt().cwiseInverse());
      break;
    case Metric::Kind::Dense: {
      DenseMatrix m(metric.size(), metric.size());
      Vector e = Vector::Zero(metric.size());
      for (Index j = 0; j < metric.size(); ++j) {
        e[j] = 1.0;
        m.col(j) = metric.apply_inv_sqrt(e);
        e[j] = 0.0;
      }
      inv_sqrt = std::make_shared<linops::DenseOperator>(0.5 * (m + m.transpose()));
      break;
    }
  }
  return QuadraticLoss(std::make_shared<linops::ComposedOperator>(loss.op, inv_sqrt), loss.b);
}

}  // namespace pnp::proximal
