#pragma once

#include <Eigen/SparseCore>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include "pnp/common.hpp"
#include "pnp/proximal.hpp"

namespace pnp::denoisers {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// x -> W x for a fixed weight matrix W, together with the scaling matrix H
/// in whose geometry W is a proximal map.
class LinearDenoiser {
 public:
  virtual ~LinearDenoiser() = default;

  virtual std::string_view kind() const = 0;
  virtual Index size() const = 0;
  virtual Vector apply(const Vector& x) const = 0;
  virtual proximal::Metric scaling() const = 0;

  /// W as a dense matrix, built column by column. Test scale only.
  virtual DenseMatrix to_dense() const;
};

using DenoiserPtr = std::shared_ptr<const LinearDenoiser>;

struct NlmParams {
  int patch_radius = 3;   // 7x7 patches
  int window_radius = 5;  // 11x11 search window
  double h = 0.4;         // Gaussian bandwidth on raw patch distances
};

/// W = D^{-1} K with K symmetric, entrywise nonnegative, PSD, positive row sums.
class KernelDenoiser final : public LinearDenoiser {
 public:
  /// Validates symmetry, nonnegativity and positive row sums of K.
  explicit KernelDenoiser(SparseMatrix kernel, NlmParams params = {});

  std::string_view kind() const override { return "nlm"; }
  Index size() const override { return kernel_.rows(); }
  Vector apply(const Vector& x) const override;
  proximal::Metric scaling() const override { return proximal::Metric::diagonal(row_sums_); }

  const SparseMatrix& kernel() const { return kernel_; }
  const Vector& normalization() const { return row_sums_; }
  const NlmParams& params() const { return params_; }

 private:
  SparseMatrix kernel_;
  Vector row_sums_;
  NlmParams params_;
};

/// x -> (2W - W^2) x over a kernel denoiser. Shares the scaling matrix D.
class TwoWMinusWSquared final : public LinearDenoiser {
 public:
  explicit TwoWMinusWSquared(std::shared_ptr<const KernelDenoiser> base);

  std::string_view kind() const override { return "2w-w2"; }
  Index size() const override { return base_->size(); }
  Vector apply(const Vector& x) const override;
  proximal::Metric scaling() const override { return base_->scaling(); }
  const KernelDenoiser& base() const { return *base_; }

 private:
  std::shared_ptr<const KernelDenoiser> base_;
};

/// Symmetric W (DSG-NLM, classical symmetric filters); scaling matrix I.
class SymmetricDenoiser final : public LinearDenoiser {
 public:
  SymmetricDenoiser(SparseMatrix weights, std::string_view kind);

  std::string_view kind() const override { return kind_; }
  Index size() const override { return weights_.rows(); }
  Vector apply(const Vector& x) const override { return weights_ * x; }
  proximal::Metric scaling() const override { return proximal::Metric::identity(size()); }
  const SparseMatrix& weights() const { return weights_; }

 private:
  SparseMatrix weights_;
  std::string kind_;
};

/// Arbitrary dense W paired with a caller-chosen scaling matrix.
class DenseDenoiser final : public LinearDenoiser {
 public:
  DenseDenoiser(DenseMatrix w, proximal::Metric metric);

  std::string_view kind() const override { return "dense"; }
  Index size() const override { return w_.rows(); }
  Vector apply(const Vector& x) const override;
  proximal::Metric scaling() const override { return metric_; }
  DenseMatrix to_dense() const override { return w_; }

 private:
  DenseMatrix w_;
  proximal::Metric metric_;
};

/// NLM kernel with a separable hat weight over the search window:
/// kappa(i,j) = eta(i-j) * exp(-||P_i - P_j||^2 / h^2) for |i-j|_inf <= window_radius.
/// Patches are clamped at the image border by replication.
std::shared_ptr<const KernelDenoiser> build_nlm(const Image& guide, const NlmParams& params);

struct BalanceResult {
  SparseMatrix matrix;
  double residual = 0.0;  // max_i |row_sum_i - 1|
  int iterations = 0;
};

/// Symmetric Sinkhorn balancing: K <- Lambda K Lambda with Lambda = diag(rowsum)^{-1/2},
/// repeated up to max_iters, then symmetrized. Keeps K's congruence class,
/// hence PSD-ness. Throws ConvergenceError when the residual exceeds tolerance.
BalanceResult balance_symmetric(const SparseMatrix& kernel, int max_iters, double tolerance = 1e-6);

inline constexpr int kDefaultSinkhornIters = 20;

std::shared_ptr<const SymmetricDenoiser> build_dsg_nlm(const Image& guide, const NlmParams& params,
                                                       int sinkhorn_iters = kDefaultSinkhornIters);

/// Periodic size x size box filter (size odd).
std::shared_ptr<const SymmetricDenoiser> box_filter(Index height, Index width, int size);

/// Periodic sampled Gaussian filter, normalized to sum 1 (size odd).
std::shared_ptr<const SymmetricDenoiser> gaussian_filter(Index height, Index width, int size,
                                                         double variance);

proximal::Metric scaling_matrix(const LinearDenoiser& d);

Vector denoise(const LinearDenoiser& d, const Vector& x);

/// What a solver consumes: a denoiser that may be rebuilt from the current
/// iterate for a while and is then held fixed.
class DenoiserSchedule {
 public:
  virtual ~DenoiserSchedule() = default;

  /// Denoiser for the step that starts from `iterate`.
  virtual const LinearDenoiser& update(const Vector& iterate) = 0;
  /// True once the weights can no longer change.
  virtual bool frozen() const = 0;
  /// Bumped whenever update() hands out different weights.
  virtual int version() const = 0;
};

class FixedDenoiser final : public DenoiserSchedule {
 public:
  explicit FixedDenoiser(DenoiserPtr d);

  const LinearDenoiser& update(const Vector&) override { return *denoiser_; }
  bool frozen() const override { return true; }
  int version() const override { return 0; }

 private:
  DenoiserPtr denoiser_;
};

/// Rebuilds W from the (clamped to [0,1]) iterate for the first freeze_after
/// calls to update(), then keeps the last W for good.
class FrozenDenoiser final : public DenoiserSchedule {
 public:
  using Builder = std::function<DenoiserPtr(const Image& guide)>;

  FrozenDenoiser(Builder builder, Index height, Index width, int freeze_after);

  const LinearDenoiser& update(const Vector& iterate) override;
  bool frozen() const override { return builds_ >= freeze_after_; }
  int version() const override { return builds_; }

  int freeze_after() const { return freeze_after_; }
  /// The current weights; null before the first update().
  DenoiserPtr current() const { return current_; }

 private:
  Builder builder_;
  Index height_;
  Index width_;
  int freeze_after_;
  int builds_ = 0;
  DenoiserPtr current_;
};

inline constexpr int kFistaFreezeAfter = 5;
inline constexpr int kAdmmFreezeAfter = 1;

}  // namespace pnp::denoisers
