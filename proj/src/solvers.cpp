#include "pnp/solvers.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "pnp/theory.hpp"

namespace pnp::solvers {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum class MetricMode { FromDenoiser, Euclidean };

class Stopwatch {
 public:
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void check_finite(const Vector& v, const char* what, int k) {
  if (!v.allFinite()) throw SolverAbort(std::string("non-finite ") + what, k);
}

// Metric the step runs in, plus the denoiser's own metric (for Phi).
struct Geometry {
  int version = -1;
  proximal::Metric step = proximal::Metric::identity(0);
  proximal::Metric denoiser = proximal::Metric::identity(0);
};

void refresh(Geometry& g, const denoisers::LinearDenoiser& d, int version, MetricMode mode) {
  if (g.version == version) return;
  g.version = version;
  g.denoiser = d.scaling();
  g.step = mode == MetricMode::FromDenoiser ? g.denoiser : proximal::Metric::identity(d.size());
}

FistaResult run_fista(const proximal::QuadraticLoss& loss, denoisers::DenoiserSchedule& schedule,
                      const Vector& x0, const FistaOptions& options, MetricMode mode) {
  require_size(x0.size(), loss.dim(), "pnp_fista x0");
  if (options.max_iter < 1) throw std::invalid_argument("pnp_fista: max_iter must be >= 1");
  if (options.rho && !(*options.rho > 0.0)) throw std::invalid_argument("pnp_fista: rho must be positive");

  Stopwatch clock;
  FistaResult result;
  Geometry geometry;
  double rho = 0.0;
  bool warned = false;

  auto select_rho = [&](int k) {
    const double certified = proximal::smoothness_constant(loss, geometry.step);
    if (!options.rho) {
      rho = certified;
      return;
    }
    rho = *options.rho;
    if (rho < certified * (1.0 - 1e-12) && !warned) {
      warned = true;
      result.diagnostics.warnings.push_back("rho " + std::to_string(rho) +
                                            " is below the certified smoothness constant " +
                                            std::to_string(certified) + " (iteration " +
                                            std::to_string(k) + ")");
    }
  };

  // One forward-backward step from `from`; returns x and the denoiser input q.
  auto step = [&](const Vector& from, int k, Vector& q) -> Vector {
    const int before = schedule.version();
    const auto& den = schedule.update(from);
    const int version = schedule.version();
    if (version != geometry.version || before != version) {
      refresh(geometry, den, version, mode);
      select_rho(k);
    }
    q = from - geometry.step.solve(loss.gradient(from)) / rho;
    return den.apply(q);
  };

  auto record = [&](int k, const Vector& x, const Vector& q, double residual) {
    IterationRecord rec;
    rec.k = k;
    rec.residual = residual;
    rec.objective = kNaN;
    if (options.track_objective && schedule.frozen()) {
      rec.objective = loss.value(x) + rho * theory::eval_phi_fast(geometry.denoiser, x, q);
    }
    rec.psnr = options.quality ? options.quality(x) : kNaN;
    rec.time_ms = clock.elapsed_ms();
    result.diagnostics.records.push_back(rec);
  };

  FistaState state;
  Vector q;
  state.k = 1;
  state.t = 1.0;
  state.y = x0;
  state.x_prev = x0;
  state.x = step(x0, 1, q);
  check_finite(state.x, "FISTA iterate", 1);
  state.rho = rho;
  record(1, state.x, q, (state.x - x0).norm());
  if (options.observer) options.observer(state);

  for (int k = 1; k < options.max_iter; ++k) {
    if (options.tolerance > 0.0 && result.diagnostics.records.back().residual < options.tolerance) break;
    const double t_next = options.schedule.next(state.t, k);
    state.y = state.x + ((state.t - 1.0) / t_next) * (state.x - state.x_prev);
    Vector x_next = step(state.y, k + 1, q);
    check_finite(x_next, "FISTA iterate", k + 1);
    const double residual = (x_next - state.x).norm();
    state.x_prev = std::move(state.x);
    state.x = std::move(x_next);
    state.t = t_next;
    state.k = k + 1;
    state.rho = rho;
    record(k + 1, state.x, q, residual);
    if (options.observer) options.observer(state);
  }

  result.solution = std::move(state.x);
  result.rho = rho;
  return result;
}

AdmmResult run_admm(const proximal::QuadraticLoss& loss, denoisers::DenoiserSchedule& schedule,
                    const Vector& z1, const Vector& nu1, const AdmmOptions& options, MetricMode mode) {
  require_size(z1.size(), loss.dim(), "pnp_admm z1");
  require_size(nu1.size(), loss.dim(), "pnp_admm nu1");
  if (!(options.rho > 0.0)) throw std::invalid_argument("pnp_admm: rho must be positive");
  if (options.max_iter < 1) throw std::invalid_argument("pnp_admm: max_iter must be >= 1");

  Stopwatch clock;
  AdmmResult result;
  Geometry geometry;
  const double rho = options.rho;

  AdmmState state;
  state.rho = rho;
  state.z = z1;
  state.nu = nu1;
  state.x = Vector::Zero(loss.dim());

  for (int k = 1; k <= options.max_iter; ++k) {
    const auto& den = schedule.update(state.z);
    refresh(geometry, den, schedule.version(), mode);

    state.x = proximal::prox_quadratic_scaled(loss, geometry.step, rho, state.z - state.nu / rho,
                                              options.prox);
    const Vector q = state.x + state.nu / rho;
    state.z = den.apply(q);
    state.nu += rho * (state.x - state.z);
    state.k = k;
    check_finite(state.x, "ADMM x iterate", k);
    check_finite(state.z, "ADMM z iterate", k);
    check_finite(state.nu, "ADMM dual iterate", k);

    IterationRecord rec;
    rec.k = k;
    rec.residual = (state.x - state.z).norm();
    rec.objective = kNaN;
    if (options.track_objective && schedule.frozen()) {
      rec.objective = loss.value(state.x) + rho * theory::eval_phi_fast(geometry.denoiser, state.z, q);
    }
    rec.psnr = options.quality ? options.quality(state.z) : kNaN;
    rec.time_ms = clock.elapsed_ms();
    result.diagnostics.records.push_back(rec);
    if (options.observer) options.observer(state);
    if (options.tolerance > 0.0 && rec.residual < options.tolerance) break;
  }

  result.x = std::move(state.x);
  result.z = std::move(state.z);
  result.nu = std::move(state.nu);
  return result;
}

void append_number(std::string& line, double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("write_csv: number formatting failed");
  line.append(buf, end);
}

}  // namespace

double MomentumSchedule::next(double t_k, int k) const {
  switch (kind) {
    case Kind::Classical:
      return 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_k * t_k));
    case Kind::Chambolle:
      if (!(a > 2.0)) throw std::invalid_argument("MomentumSchedule: Chambolle schedule needs a > 2");
      return 1.0 + static_cast<double>(k) / a;
  }
  return t_k;
}

void write_csv(const Diagnostics& diagnostics, std::ostream& out, bool include_time) {
  out << "k,objective,residual,psnr,time_ms\n";
  std::string line;
  for (const auto& r : diagnostics.records) {
    line = std::to_string(r.k);
    line += ',';
    append_number(line, r.objective);
    line += ',';
    append_number(line, r.residual);
    line += ',';
    append_number(line, r.psnr);
    line += ',';
    append_number(line, include_time ? r.time_ms : 0.0);
    line += '\n';
    out << line;
  }
}

FistaResult scaled_pnp_fista(const proximal::QuadraticLoss& loss, denoisers::DenoiserSchedule& denoiser,
                             const Vector& x0, const FistaOptions& options) {
  return run_fista(loss, denoiser, x0, options, MetricMode::FromDenoiser);
}

FistaResult standard_pnp_fista(const proximal::QuadraticLoss& loss,
                               denoisers::DenoiserSchedule& denoiser, const Vector& x0,
                               const FistaOptions& options) {
  return run_fista(loss, denoiser, x0, options, MetricMode::Euclidean);
}

AdmmResult scaled_pnp_admm(const proximal::QuadraticLoss& loss, denoisers::DenoiserSchedule& denoiser,
                           const Vector& z1, const Vector& nu1, const AdmmOptions& options) {
  return run_admm(loss, denoiser, z1, nu1, options, MetricMode::FromDenoiser);
}

AdmmResult standard_pnp_admm(const proximal::QuadraticLoss& loss,
                             denoisers::DenoiserSchedule& denoiser, const Vector& z1,
                             const Vector& nu1, const AdmmOptions& options) {
  return run_admm(loss, denoiser, z1, nu1, options, MetricMode::Euclidean);
}

}  // namespace pnp::solvers
