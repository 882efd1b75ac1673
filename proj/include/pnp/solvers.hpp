#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pnp/common.hpp"
#include "pnp/denoisers.hpp"
#include "pnp/proximal.hpp"

namespace pnp::solvers {

/// Momentum sequence for FISTA. Classical: t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2.
/// Chambolle: t_{k+1} = 1 + k / a with a > 2, which also gives iterate convergence.
struct MomentumSchedule {
  enum class Kind { Classical, Chambolle };
  Kind kind = Kind::Classical;
  double a = 3.0;

  static MomentumSchedule classical() { return {}; }
  static MomentumSchedule chambolle(double a = 3.0) { return {Kind::Chambolle, a}; }

  double next(double t_k, int k) const;
};

/// One row of the per-iteration log. objective and psnr are NaN when not
/// available (objective: denoiser not frozen yet or tracking disabled).
struct IterationRecord {
  int k = 0;
  double objective = 0.0;
  double residual = 0.0;
  double psnr = 0.0;
  double time_ms = 0.0;
};

struct Diagnostics {
  std::vector<IterationRecord> records;
  std::vector<std::string> warnings;
};

/// CSV with columns k,objective,residual,psnr,time_ms. Locale independent;
/// with include_time == false the time column is written as 0 so reruns are
/// byte-identical.
void write_csv(const Diagnostics& diagnostics, std::ostream& out, bool include_time = true);

struct FistaState {
  int k = 0;
  double t = 1.0;
  double rho = 0.0;
  Vector x;       // x_k
  Vector x_prev;  // x_{k-1}
  Vector y;       // point the last gradient step started from (x_0 at k = 1)
};

struct AdmmState {
  int k = 0;  // number of completed updates
  double rho = 0.0;
  Vector x;
  Vector z;
  Vector nu;
};

using QualityFn = std::function<double(const Vector&)>;

struct FistaOptions {
  /// Step parameter. When unset, rho = smoothness_constant(loss, H), refreshed
  /// each time the denoiser (and so H) changes before it freezes.
  std::optional<double> rho;
  MomentumSchedule schedule;
  int max_iter = 100;
  /// Stop once ||x_k - x_{k-1}||_2 < tolerance; 0 disables.
  double tolerance = 0.0;
  bool track_objective = true;
  QualityFn quality;  // e.g. PSNR against ground truth
  std::function<void(const FistaState&)> observer;
};

struct AdmmOptions {
  double rho = 1.0;
  int max_iter = 100;
  /// Stop once ||x_k - z_k||_2 < tolerance; 0 disables.
  double tolerance = 0.0;
  bool track_objective = true;
  QualityFn quality;  // evaluated on z_k
  std::function<void(const AdmmState&)> observer;
  proximal::ProxOptions prox;
};

struct FistaResult {
  Vector solution;
  double rho = 0.0;
  Diagnostics diagnostics;
};

struct AdmmResult {
  Vector x;
  Vector z;
  Vector nu;
  Diagnostics diagnostics;
};

/// Scaled PnP-FISTA: x_{k+1} = D(y_{k+1} - rho^{-1} H^{-1} grad f(y_{k+1})) with
/// H the denoiser's scaling matrix. The objective logged is f(x_k) + rho Phi(x_k).
FistaResult scaled_pnp_fista(const proximal::QuadraticLoss& loss, denoisers::DenoiserSchedule& denoiser,
                             const Vector& x0, const FistaOptions& options);

/// PnP-FISTA in the Euclidean metric (H = I).
FistaResult standard_pnp_fista(const proximal::QuadraticLoss& loss,
                               denoisers::DenoiserSchedule& denoiser, const Vector& x0,
                               const FistaOptions& options);

/// Scaled PnP-ADMM:
///   x <- prox_{f/rho, ||.||_H}(z - nu/rho),  z <- D(x + nu/rho),  nu <- nu + rho (x - z).
/// The denoiser is updated from z_k at the start of every iteration.
AdmmResult scaled_pnp_admm(const proximal::QuadraticLoss& loss, denoisers::DenoiserSchedule& denoiser,
                           const Vector& z1, const Vector& nu1, const AdmmOptions& options);

/// PnP-ADMM in the Euclidean metric (H = I).
AdmmResult standard_pnp_admm(const proximal::QuadraticLoss& loss,
                             denoisers::DenoiserSchedule& denoiser, const Vector& z1,
                             const Vector& nu1, const AdmmOptions& options);

}  // namespace pnp::solvers
