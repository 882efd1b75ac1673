#include "pnp/denoisers.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace pnp::denoisers {

DenseMatrix LinearDenoiser::to_dense() const {
  const Index n = size();
  DenseMatrix w(n, n);
  Vector e = Vector::Zero(n);
  for (Index j = 0; j < n; ++j) {
    e[j] = 1.0;
    w.col(j) = apply(e);
    e[j] = 0.0;
  }
  return w;
}

namespace {

Vector row_sums(const SparseMatrix& m) {
  Vector r = Vector::Zero(m.rows());
  for (Index i = 0; i < m.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(m, i); it; ++it) r[i] += it.value();
  }
  return r;
}

bool exactly_symmetric(const SparseMatrix& m) {
  const SparseMatrix t = m.transpose();
  if (t.nonZeros() != m.nonZeros()) return false;
  for (Index i = 0; i < m.outerSize(); ++i) {
    SparseMatrix::InnerIterator a(m, i);
    SparseMatrix::InnerIterator b(t, i);
    for (; a && b; ++a, ++b) {
      if (a.col() != b.col() || a.value() != b.value()) return false;
    }
    if (a || b) return false;
  }
  return true;
}

SparseMatrix symmetrize(const SparseMatrix& m) {
  SparseMatrix t = m.transpose();
  SparseMatrix s = 0.5 * (m + t);
  s.makeCompressed();
  return s;
}

}  // namespace

KernelDenoiser::KernelDenoiser(SparseMatrix kernel, NlmParams params)
    : kernel_(std::move(kernel)), params_(params) {
  if (kernel_.rows() != kernel_.cols()) throw DimensionError("KernelDenoiser: kernel is not square");
  kernel_.makeCompressed();
  for (Index i = 0; i < kernel_.nonZeros(); ++i) {
    const double v = kernel_.valuePtr()[i];
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("KernelDenoiser: kernel entries must be finite and nonnegative");
    }
  }
  if (!exactly_symmetric(kernel_)) throw std::invalid_argument("KernelDenoiser: kernel is not symmetric");
  row_sums_ = row_sums(kernel_);
  if (row_sums_.size() == 0 || row_sums_.minCoeff() <= 0.0) {
    throw std::invalid_argument("KernelDenoiser: kernel row sums must be positive");
  }
}

Vector KernelDenoiser::apply(const Vector& x) const {
  require_size(x.size(), size(), "KernelDenoiser::apply");
  return (kernel_ * x).cwiseQuotient(row_sums_);
}

TwoWMinusWSquared::TwoWMinusWSquared(std::shared_ptr<const KernelDenoiser> base)
    : base_(std::move(base)) {
  if (!base_) throw std::invalid_argument("TwoWMinusWSquared: null base denoiser");
}

Vector TwoWMinusWSquared::apply(const Vector& x) const {
  const Vector wx = base_->apply(x);
  return 2.0 * wx - base_->apply(wx);
}

SymmetricDenoiser::SymmetricDenoiser(SparseMatrix weights, std::string_view kind)
    : weights_(std::move(weights)), kind_(kind) {
  if (weights_.rows() != weights_.cols()) throw DimensionError("SymmetricDenoiser: W is not square");
  weights_.makeCompressed();
  if (!exactly_symmetric(weights_)) throw std::invalid_argument("SymmetricDenoiser: W is not symmetric");
}

DenseDenoiser::DenseDenoiser(DenseMatrix w, proximal::Metric metric)
    : w_(std::move(w)), metric_(std::move(metric)) {
  if (w_.rows() != w_.cols()) throw DimensionError("DenseDenoiser: W is not square");
  require_size(metric_.size(), w_.rows(), "DenseDenoiser metric");
  if (!w_.allFinite()) throw std::invalid_argument("DenseDenoiser: non-finite entries");
}

Vector DenseDenoiser::apply(const Vector& x) const {
  require_size(x.size(), size(), "DenseDenoiser::apply");
  return w_ * x;
}

// ---------------------------------------------------------------------------

std::shared_ptr<const KernelDenoiser> build_nlm(const Image& guide, const NlmParams& params) {
  if (!(params.h > 0.0)) throw std::invalid_argument("build_nlm: h must be positive");
  if (params.patch_radius < 0 || params.window_radius < params.patch_radius) {
    throw std::invalid_argument("build_nlm: need window_radius >= patch_radius >= 0");
  }
  if (guide.size() == 0) throw std::invalid_argument("build_nlm: empty guide");

  const Index rows = guide.height;
  const Index cols = guide.width;
  const int p = params.patch_radius;
  const int R = params.window_radius;

  // Replicate-padded guide so every patch read is in bounds.
  const Index prow = rows + 2 * p;
  const Index pcol = cols + 2 * p;
  std::vector<double> padded(static_cast<std::size_t>(prow * pcol));
  for (Index r = 0; r < prow; ++r) {
    const Index sr = std::clamp<Index>(r - p, 0, rows - 1);
    for (Index c = 0; c < pcol; ++c) {
      const Index sc = std::clamp<Index>(c - p, 0, cols - 1);
      padded[static_cast<std::size_t>(r * pcol + c)] = guide.at(sr, sc);
    }
  }

  // Separable hat, vanishing one step beyond the window edge.
  std::vector<double> hat(static_cast<std::size_t>(2 * R + 1));
  for (int d = -R; d <= R; ++d) hat[static_cast<std::size_t>(d + R)] = 1.0 - std::abs(d) / (R + 1.0);

  const double inv_h2 = 1.0 / (params.h * params.h);
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(rows * cols * (2 * R + 1) * (2 * R + 1)));

  auto patch_distance = [&](Index r0, Index c0, Index r1, Index c1) {
    double d2 = 0.0;
    for (int dy = 0; dy <= 2 * p; ++dy) {
      const double* a = &padded[static_cast<std::size_t>((r0 + dy) * pcol + c0)];
      const double* b = &padded[static_cast<std::size_t>((r1 + dy) * pcol + c1)];
      for (int dx = 0; dx <= 2 * p; ++dx) {
        const double diff = a[dx] - b[dx];
        d2 += diff * diff;
      }
    }
    return d2;
  };

  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const Index i = r * cols + c;
      for (int dy = -R; dy <= R; ++dy) {
        const Index rr = r + dy;
        if (rr < 0 || rr >= rows) continue;
        for (int dx = -R; dx <= R; ++dx) {
          const Index cc = c + dx;
          if (cc < 0 || cc >= cols) continue;
          const double eta = hat[static_cast<std::size_t>(dy + R)] * hat[static_cast<std::size_t>(dx + R)];
          const double w = eta * std::exp(-patch_distance(r, c, rr, cc) * inv_h2);
          if (w > 0.0) entries.emplace_back(i, rr * cols + cc, w);
        }
      }
    }
  }

  SparseMatrix kernel(rows * cols, rows * cols);
  kernel.setFromTriplets(entries.begin(), entries.end());
  return std::make_shared<KernelDenoiser>(std::move(kernel), params);
}

BalanceResult balance_symmetric(const SparseMatrix& kernel, int max_iters, double tolerance) {
  if (kernel.rows() != kernel.cols()) throw DimensionError("balance_symmetric: matrix is not square");
  const Index n = kernel.rows();
  Vector scale = Vector::Ones(n);
  BalanceResult out;

  auto residual_of = [&](const Vector& sums) { return (sums.array() - 1.0).abs().maxCoeff(); };
  // Row sums of diag(s) K diag(s) are s .* (K s).
  Vector sums = scale.cwiseProduct(kernel * scale);
  out.residual = residual_of(sums);
  for (int it = 0; it < max_iters && out.residual > 1e-15; ++it) {
    if (sums.minCoeff() <= 0.0) {
      throw std::invalid_argument("balance_symmetric: nonpositive row sum");
    }
    scale = scale.cwiseQuotient(sums.cwiseSqrt());
    sums = scale.cwiseProduct(kernel * scale);
    out.residual = residual_of(sums);
    out.iterations = it + 1;
  }

  SparseMatrix balanced = scale.asDiagonal() * kernel * scale.asDiagonal();
  out.matrix = symmetrize(balanced);
  out.residual = residual_of(row_sums(out.matrix));
  if (out.residual > tolerance) {
    throw ConvergenceError("balance_symmetric: row sums not within " + std::to_string(tolerance) +
                               " after " + std::to_string(max_iters) + " iterations",
                           out.residual);
  }
  return out;
}

std::shared_ptr<const SymmetricDenoiser> build_dsg_nlm(const Image& guide, const NlmParams& params,
                                                       int sinkhorn_iters) {
  const auto nlm = build_nlm(guide, params);
  auto balanced = balance_symmetric(nlm->kernel(), sinkhorn_iters);
  return std::make_shared<SymmetricDenoiser>(std::move(balanced.matrix), "dsg-nlm");
}

namespace {

std::shared_ptr<const SymmetricDenoiser> periodic_filter(Index height, Index width,
                                                         const DenseMatrix& taps,
                                                         std::string_view kind) {
  const Index half = taps.rows() / 2;
  std::vector<Eigen::Triplet<double>> entries;
  for (Index r = 0; r < height; ++r) {
    for (Index c = 0; c < width; ++c) {
      for (Index dy = -half; dy <= half; ++dy) {
        for (Index dx = -half; dx <= half; ++dx) {
          const Index rr = ((r + dy) % height + height) % height;
          const Index cc = ((c + dx) % width + width) % width;
          entries.emplace_back(r * width + c, rr * width + cc, taps(dy + half, dx + half));
        }
      }
    }
  }
  SparseMatrix w(height * width, height * width);
  w.setFromTriplets(entries.begin(), entries.end());
  // Taps are symmetric, but wrap-around can merge duplicates in a different
  // summation order; symmetrize to make W^T = W bit-exact.
  return std::make_shared<SymmetricDenoiser>(symmetrize(w), kind);
}

void check_filter_size(Index height, Index width, int size) {
  if (size <= 0 || size % 2 == 0) throw std::invalid_argument("filter size must be odd and positive");
  if (size > height || size > width) throw std::invalid_argument("filter larger than image");
}

}  // namespace

std::shared_ptr<const SymmetricDenoiser> box_filter(Index height, Index width, int size) {
  check_filter_size(height, width, size);
  const DenseMatrix taps = DenseMatrix::Constant(size, size, 1.0 / (size * size));
  return periodic_filter(height, width, taps, "box");
}

std::shared_ptr<const SymmetricDenoiser> gaussian_filter(Index height, Index width, int size,
                                                         double variance) {
  check_filter_size(height, width, size);
  if (!(variance > 0.0)) throw std::invalid_argument("gaussian_filter: variance must be positive");
  DenseMatrix taps(size, size);
  const int half = size / 2;
  for (int r = -half; r <= half; ++r) {
    for (int c = -half; c <= half; ++c) {
      taps(r + half, c + half) = std::exp(-(r * r + c * c) / (2.0 * variance));
    }
  }
  taps /= taps.sum();
  return periodic_filter(height, width, taps, "gaussian");
}

proximal::Metric scaling_matrix(const LinearDenoiser& d) { return d.scaling(); }

Vector denoise(const LinearDenoiser& d, const Vector& x) {
  require_size(x.size(), d.size(), "denoise");
  return d.apply(x);
}

// ---------------------------------------------------------------------------

FixedDenoiser::FixedDenoiser(DenoiserPtr d) : denoiser_(std::move(d)) {
  if (!denoiser_) throw std::invalid_argument("FixedDenoiser: null denoiser");
}

FrozenDenoiser::FrozenDenoiser(Builder builder, Index height, Index width, int freeze_after)
    : builder_(std::move(builder)), height_(height), width_(width), freeze_after_(freeze_after) {
  if (!builder_) throw std::invalid_argument("FrozenDenoiser: null builder");
  if (freeze_after_ < 1) throw std::invalid_argument("FrozenDenoiser: freeze_after must be >= 1");
}

const LinearDenoiser& FrozenDenoiser::update(const Vector& iterate) {
  if (!frozen()) {
    require_size(iterate.size(), height_ * width_, "FrozenDenoiser::update");
    Image guide(height_, width_, iterate.cwiseMax(0.0).cwiseMin(1.0));
    current_ = builder_(guide);
    if (!current_) throw std::runtime_error("FrozenDenoiser: builder returned null");
    ++builds_;
  }
  return *current_;
}

}  // namespace pnp::denoisers
