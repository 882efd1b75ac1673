#include "pnp/linops.hpp"

#include <fftw3.h>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numeric>
#include <string>

namespace pnp::linops {

Vector LinearOperator::apply(const Vector& x) const {
  require_size(x.size(), cols(), "LinearOperator::apply");
  return do_apply(x);
}

Vector LinearOperator::apply_adjoint(const Vector& y) const {
  require_size(y.size(), rows(), "LinearOperator::apply_adjoint");
  return do_apply_adjoint(y);
}

double LinearOperator::gram_max_eigenvalue() const {
  const Index n = cols();
  if (n == 0) return 0.0;
  // Deterministic, generic start vector; the all-ones direction is often an
  // eigenvector of blur/mask operators and would hide the top mode.
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(i) + 0.3);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 5000; ++it) {
    Vector w = apply_adjoint(apply(v));
    const double next = v.dot(w);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    if (std::abs(next - lambda) <= 1e-14 * std::abs(next)) return next;
    lambda = next;
  }
  return lambda;
}

DenseMatrix LinearOperator::to_dense() const {
  DenseMatrix m(rows(), cols());
  Vector e = Vector::Zero(cols());
  for (Index j = 0; j < cols(); ++j) {
    e[j] = 1.0;
    m.col(j) = apply(e);
    e[j] = 0.0;
  }
  return m;
}

// ---------------------------------------------------------------------------

DenseOperator::DenseOperator(DenseMatrix m) : matrix_(std::move(m)) {
  if (!matrix_.allFinite()) throw std::invalid_argument("DenseOperator: non-finite entries");
}

double DenseOperator::gram_max_eigenvalue() const {
  if (matrix_.size() == 0) return 0.0;
  Eigen::JacobiSVD<DenseMatrix> svd(matrix_);
  const double s = svd.singularValues()[0];
  return s * s;
}

DiagonalOperator::DiagonalOperator(Vector diag) : diag_(std::move(diag)) {
  if (!diag_.allFinite()) throw std::invalid_argument("DiagonalOperator: non-finite entries");
}

double DiagonalOperator::gram_max_eigenvalue() const {
  return diag_.size() == 0 ? 0.0 : diag_.cwiseAbs2().maxCoeff();
}

MaskOperator::MaskOperator(Index n, std::vector<Index> kept_indices)
    : n_(n), kept_(std::move(kept_indices)) {
  if (static_cast<Index>(kept_.size()) >= n_) {
    throw std::invalid_argument("MaskOperator: must keep fewer than n coordinates");
  }
  for (std::size_t i = 0; i < kept_.size(); ++i) {
    if (kept_[i] < 0 || kept_[i] >= n_ || (i > 0 && kept_[i] <= kept_[i - 1])) {
      throw std::invalid_argument("MaskOperator: kept indices must be strictly increasing in [0,n)");
    }
  }
}

std::optional<Vector> MaskOperator::gram_diagonal() const {
  Vector d = Vector::Zero(n_);
  for (Index i : kept_) d[i] = 1.0;
  return d;
}

Vector MaskOperator::do_apply(const Vector& x) const {
  Vector y(static_cast<Index>(kept_.size()));
  for (std::size_t i = 0; i < kept_.size(); ++i) y[static_cast<Index>(i)] = x[kept_[i]];
  return y;
}

Vector MaskOperator::do_apply_adjoint(const Vector& y) const {
  Vector x = Vector::Zero(n_);
  for (std::size_t i = 0; i < kept_.size(); ++i) x[kept_[i]] = y[static_cast<Index>(i)];
  return x;
}

// ---------------------------------------------------------------------------

namespace {
// The FFTW planner is not reentrant; execution with new arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

struct CirculantOperator::Plans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

CirculantOperator::CirculantOperator(const Image& psf, Index height, Index width)
    : height_(height), width_(width), plans_(std::make_unique<Plans>()) {
  if (height <= 0 || width <= 0) throw std::invalid_argument("CirculantOperator: empty image");
  if (psf.height <= 0 || psf.width <= 0 || psf.height > height || psf.width > width) {
    throw std::invalid_argument("CirculantOperator: PSF must be non-empty and fit in the image");
  }
  if (!psf.pixels.allFinite()) throw std::invalid_argument("CirculantOperator: non-finite PSF");

  const Index half = width_ / 2 + 1;
  {
    std::lock_guard lock(planner_mutex());
    std::vector<double> real(static_cast<std::size_t>(height_ * width_));
    auto* spectrum = fftw_alloc_complex(static_cast<std::size_t>(height_ * half));
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    plans_->forward = fftw_plan_dft_r2c_2d(static_cast<int>(height_), static_cast<int>(width_),
                                           real.data(), spectrum, flags);
    plans_->backward = fftw_plan_dft_c2r_2d(static_cast<int>(height_), static_cast<int>(width_),
                                            spectrum, real.data(), flags);
    fftw_free(spectrum);
  }

  // Wrap the PSF so its centre sits at pixel (0,0).
  std::vector<double> kernel(static_cast<std::size_t>(height_ * width_), 0.0);
  const Index cr = psf.height / 2;
  const Index cc = psf.width / 2;
  for (Index r = 0; r < psf.height; ++r) {
    for (Index c = 0; c < psf.width; ++c) {
      const Index rr = ((r - cr) % height_ + height_) % height_;
      const Index cc2 = ((c - cc) % width_ + width_) % width_;
      kernel[static_cast<std::size_t>(rr * width_ + cc2)] += psf.at(r, c);
    }
  }
  std::vector<fftw_complex> freq(static_cast<std::size_t>(height_ * half));
  fftw_execute_dft_r2c(plans_->forward, kernel.data(), freq.data());
  transfer_re_.resize(freq.size());
  transfer_im_.resize(freq.size());
  for (std::size_t i = 0; i < freq.size(); ++i) {
    transfer_re_[i] = freq[i][0];
    transfer_im_[i] = freq[i][1];
  }
}

CirculantOperator::~CirculantOperator() {
  std::lock_guard lock(planner_mutex());
  if (plans_->forward) fftw_destroy_plan(plans_->forward);
  if (plans_->backward) fftw_destroy_plan(plans_->backward);
}

Vector CirculantOperator::filter(const Vector& x, bool conjugate) const {
  const Index n = height_ * width_;
  const Index half = width_ / 2 + 1;
  std::vector<double> in(x.data(), x.data() + n);
  std::vector<fftw_complex> freq(static_cast<std::size_t>(height_ * half));
  fftw_execute_dft_r2c(plans_->forward, in.data(), freq.data());
  const double sign = conjugate ? -1.0 : 1.0;
  for (std::size_t i = 0; i < freq.size(); ++i) {
    const double a = freq[i][0];
    const double b = freq[i][1];
    const double c = transfer_re_[i];
    const double d = sign * transfer_im_[i];
    freq[i][0] = a * c - b * d;
    freq[i][1] = a * d + b * c;
  }
  Vector out(n);
  fftw_execute_dft_c2r(plans_->backward, freq.data(), out.data());
  out /= static_cast<double>(n);
  return out;
}

Vector CirculantOperator::do_apply(const Vector& x) const { return filter(x, false); }
Vector CirculantOperator::do_apply_adjoint(const Vector& y) const { return filter(y, true); }

Vector CirculantOperator::gram_eigenvalues() const {
  // Real input => X[-k] = conj(X[k]); rebuild the full grid from the half spectrum.
  const Index half = width_ / 2 + 1;
  Vector eig(height_ * width_);
  for (Index r = 0; r < height_; ++r) {
    for (Index c = 0; c < width_; ++c) {
      Index rr = r;
      Index cc = c;
      if (c >= half) {
        rr = (height_ - r) % height_;
        cc = width_ - c;
      }
      const auto i = static_cast<std::size_t>(rr * half + cc);
      eig[r * width_ + c] = transfer_re_[i] * transfer_re_[i] + transfer_im_[i] * transfer_im_[i];
    }
  }
  return eig;
}

double CirculantOperator::gram_max_eigenvalue() const {
  double best = 0.0;
  for (std::size_t i = 0; i < transfer_re_.size(); ++i) {
    best = std::max(best, transfer_re_[i] * transfer_re_[i] + transfer_im_[i] * transfer_im_[i]);
  }
  return best;
}

ComposedOperator::ComposedOperator(OperatorPtr first, OperatorPtr second)
    : first_(std::move(first)), second_(std::move(second)) {
  if (!first_ || !second_) throw std::invalid_argument("ComposedOperator: null operand");
  require_size(first_->cols(), second_->rows(), "ComposedOperator");
}

std::optional<Vector> ComposedOperator::gram_diagonal() const {
  // (A D)^T (A D) = D (A^T A) D stays diagonal when both factors are.
  auto* diag = dynamic_cast<const DiagonalOperator*>(second_.get());
  auto inner = first_->gram_diagonal();
  if (diag == nullptr || !inner) return std::nullopt;
  return diag->diag().cwiseAbs2().cwiseProduct(*inner);
}

// ---------------------------------------------------------------------------

EigenDecomposition symmetric_eig(const DenseMatrix& m, double rank_tol) {
  if (m.rows() != m.cols()) throw DimensionError("symmetric_eig: matrix is not square");
  const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale) {
    throw std::invalid_argument("symmetric_eig: matrix is not symmetric (asymmetry " +
                                std::to_string(asym / scale) + " relative)");
  }
  const DenseMatrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<DenseMatrix> solver(sym);
  if (solver.info() != Eigen::Success) throw std::runtime_error("symmetric_eig: decomposition failed");

  const Index n = m.rows();
  EigenDecomposition out;
  out.rank_tolerance = rank_tol;
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  // Eigen returns ascending order.
  for (Index i = 0; i < n; ++i) {
    out.eigenvalues[i] = solver.eigenvalues()[n - 1 - i];
    out.eigenvectors.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  const double lambda_max = n > 0 ? out.eigenvalues[0] : 0.0;
  out.rank = 0;
  if (lambda_max > 0.0) {
    for (Index i = 0; i < n; ++i) {
      if (out.eigenvalues[i] > rank_tol * lambda_max) ++out.rank;
    }
  }
  return out;
}

DominantEigenpair power_dominant_eig(const DenseMatrix& m, double tol, int max_iter) {
  if (m.rows() != m.cols()) throw DimensionError("power_dominant_eig: matrix is not square");
  const Index n = m.rows();
  DominantEigenpair out;
  if (n == 0) return out;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = 1.0 + 0.25 * std::cos(2.3 * static_cast<double>(i) + 0.7);
  v.normalize();
  for (int it = 1; it <= max_iter; ++it) {
    Vector w = m * v;
    const double lambda = v.dot(w);
    out.residual = (w - lambda * v).norm();
    out.eigenvalue = lambda;
    out.eigenvector = v;
    out.iterations = it;
    if (out.residual <= tol) {
      out.converged = true;
      return out;
    }
    const double norm = w.norm();
    if (norm == 0.0) {
      // v lies in the null space: eigenvalue 0 exactly.
      out.eigenvalue = 0.0;
      out.residual = 0.0;
      out.converged = true;
      return out;
    }
    v = w / norm;
  }
  return out;
}

}  // namespace pnp::linops
