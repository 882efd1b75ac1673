#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "pnp/common.hpp"

namespace pnp::linops {

/// Linear map R^n -> R^m with an adjoint. Implementations are immutable after
/// construction, so apply/apply_adjoint are reentrant.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;

  virtual Index rows() const = 0;  // output dimension m
  virtual Index cols() const = 0;  // input dimension n

  Vector apply(const Vector& x) const;
  Vector apply_adjoint(const Vector& y) const;

  /// Diagonal of A^T A when it is diagonal (masks, diagonal scalings).
  virtual std::optional<Vector> gram_diagonal() const { return std::nullopt; }

  /// Largest eigenvalue of A^T A. The default runs power iteration on A^T A.
  virtual double gram_max_eigenvalue() const;

  /// Materialize as a dense m x n matrix. Test scale only.
  virtual DenseMatrix to_dense() const;

 protected:
  virtual Vector do_apply(const Vector& x) const = 0;
  virtual Vector do_apply_adjoint(const Vector& y) const = 0;
};

using OperatorPtr = std::shared_ptr<const LinearOperator>;

class DenseOperator final : public LinearOperator {
 public:
  explicit DenseOperator(DenseMatrix m);

  Index rows() const override { return matrix_.rows(); }
  Index cols() const override { return matrix_.cols(); }
  double gram_max_eigenvalue() const override;
  DenseMatrix to_dense() const override { return matrix_; }
  const DenseMatrix& matrix() const { return matrix_; }

 protected:
  Vector do_apply(const Vector& x) const override { return matrix_ * x; }
  Vector do_apply_adjoint(const Vector& y) const override { return matrix_.transpose() * y; }

 private:
  DenseMatrix matrix_;
};

/// diag(d). Entries may be any finite reals; positivity is only required where
/// the operator is used as a scaling matrix.
class DiagonalOperator final : public LinearOperator {
 public:
  explicit DiagonalOperator(Vector diag);

  Index rows() const override { return diag_.size(); }
  Index cols() const override { return diag_.size(); }
  std::optional<Vector> gram_diagonal() const override { return diag_.cwiseAbs2(); }
  double gram_max_eigenvalue() const override;
  const Vector& diag() const { return diag_; }
  bool is_positive() const { return diag_.size() > 0 && diag_.minCoeff() > 0.0; }

 protected:
  Vector do_apply(const Vector& x) const override { return diag_.cwiseProduct(x); }
  Vector do_apply_adjoint(const Vector& y) const override { return diag_.cwiseProduct(y); }

 private:
  Vector diag_;
};

/// Row selection: keeps m < n coordinates, in increasing index order.
class MaskOperator final : public LinearOperator {
 public:
  MaskOperator(Index n, std::vector<Index> kept_indices);

  Index rows() const override { return static_cast<Index>(kept_.size()); }
  Index cols() const override { return n_; }
  std::optional<Vector> gram_diagonal() const override;
  double gram_max_eigenvalue() const override { return 1.0; }
  const std::vector<Index>& kept_indices() const { return kept_; }

 protected:
  Vector do_apply(const Vector& x) const override;
  Vector do_apply_adjoint(const Vector& y) const override;

 private:
  Index n_;
  std::vector<Index> kept_;
};

/// Periodic 2-D convolution with a PSF, i.e. a true circulant (BCCB) matrix.
/// The PSF centre is at (psf_rows/2, psf_cols/2).
class CirculantOperator final : public LinearOperator {
 public:
  CirculantOperator(const Image& psf, Index height, Index width);
  ~CirculantOperator() override;
  CirculantOperator(const CirculantOperator&) = delete;
  CirculantOperator& operator=(const CirculantOperator&) = delete;

  Index rows() const override { return height_ * width_; }
  Index cols() const override { return height_ * width_; }
  double gram_max_eigenvalue() const override;

  /// Eigenvalues of A^T A, |DFT(psf)|^2, one per frequency (full grid, row-major).
  Vector gram_eigenvalues() const;

 protected:
  Vector do_apply(const Vector& x) const override;
  Vector do_apply_adjoint(const Vector& y) const override;

 private:
  struct Plans;
  Vector filter(const Vector& x, bool conjugate) const;

  Index height_;
  Index width_;
  std::unique_ptr<Plans> plans_;
  std::vector<double> transfer_re_;  // half spectrum, height x (width/2+1)
  std::vector<double> transfer_im_;
};

/// first o second, i.e. x -> first(second(x)).
class ComposedOperator final : public LinearOperator {
 public:
  ComposedOperator(OperatorPtr first, OperatorPtr second);

  Index rows() const override { return first_->rows(); }
  Index cols() const override { return second_->cols(); }
  std::optional<Vector> gram_diagonal() const override;

 protected:
  Vector do_apply(const Vector& x) const override { return first_->apply(second_->apply(x)); }
  Vector do_apply_adjoint(const Vector& y) const override {
    return second_->apply_adjoint(first_->apply_adjoint(y));
  }

 private:
  OperatorPtr first_;
  OperatorPtr second_;
};

struct EigenDecomposition {
  Vector eigenvalues;        // descending
  DenseMatrix eigenvectors;  // orthonormal columns, matching eigenvalues
  Index rank = 0;            // count of eigenvalues > rank_tolerance * lambda_max
  double rank_tolerance = 1e-8;
};

inline constexpr double kDefaultRankTolerance = 1e-8;

/// Dense symmetric eigendecomposition. Throws std::invalid_argument when M is
/// not symmetric to 1e-12 relative.
EigenDecomposition symmetric_eig(const DenseMatrix& m, double rank_tol = kDefaultRankTolerance);

struct DominantEigenpair {
  double eigenvalue = 0.0;
  Vector eigenvector;  // unit 2-norm
  int iterations = 0;
  bool converged = false;
  double residual = 0.0;  // ||Mv - lambda v||_2 with ||v||_2 = 1
};

/// Power iteration. When the residual does not drop below tol within max_iter
/// the result comes back with converged == false; the eigenpair is then
/// indeterminate and callers must not use it.
DominantEigenpair power_dominant_eig(const DenseMatrix& m, double tol = 1e-12,
                                     int max_iter = 100000);

}  // namespace pnp::linops
