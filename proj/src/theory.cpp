#include "pnp/theory.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <charconv>
#include <cmath>
#include <deque>
#include <ostream>
#include <random>

#include "pnp/denoisers.hpp"
#include "pnp/linops.hpp"
#include "pnp/solvers.hpp"

namespace pnp::theory {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double max_abs(const DenseMatrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

double relative_asymmetry(const DenseMatrix& m) {
  const double scale = max_abs(m);
  if (scale == 0.0) return 0.0;
  return max_abs(m - m.transpose()) / scale;
}

// Matrix of a linear map given by its action, one column at a time.
template <typename F>
DenseMatrix matrix_of(Index n, F&& f) {
  DenseMatrix out(n, n);
  Vector e = Vector::Zero(n);
  for (Index j = 0; j < n; ++j) {
    e[j] = 1.0;
    out.col(j) = f(e);
    e[j] = 0.0;
  }
  return out;
}

Refusal refuse(Refusal::Reason reason, std::string detail, double magnitude) {
  return Refusal{reason, std::move(detail), magnitude};
}

// D with D_i W_ij = D_j W_ji, found by walking the support graph of W.
std::optional<Vector> detailed_balance_scaling(const DenseMatrix& w) {
  const Index n = w.rows();
  Vector d = Vector::Zero(n);
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (Index root = 0; root < n; ++root) {
    if (seen[root]) continue;
    seen[root] = true;
    d[root] = 1.0;
    std::deque<Index> queue{root};
    while (!queue.empty()) {
      const Index i = queue.front();
      queue.pop_front();
      for (Index j = 0; j < n; ++j) {
        if (j == i || w(i, j) <= 0.0) continue;
        if (w(j, i) <= 0.0) return std::nullopt;
        if (!seen[j]) {
          seen[j] = true;
          d[j] = d[i] * w(i, j) / w(j, i);
          queue.push_back(j);
        }
      }
    }
  }
  const DenseMatrix k = d.asDiagonal() * w;
  if (relative_asymmetry(k) > kSimilarityTolerance) return std::nullopt;
  return d;
}

std::optional<proximal::Metric> infer_metric(const DenseMatrix& w) {
  if (relative_asymmetry(w) <= kSimilarityTolerance) return proximal::Metric::identity(w.rows());
  if (w.minCoeff() < 0.0) return std::nullopt;
  const Vector sums = w.rowwise().sum();
  if ((sums.array() - 1.0).abs().maxCoeff() > 1e-10) return std::nullopt;
  if (auto d = detailed_balance_scaling(w)) return proximal::Metric::diagonal(*d);
  return std::nullopt;
}

DenseMatrix orthonormal_range(const DenseMatrix& basis) {
  if (basis.cols() == 0) return DenseMatrix(basis.rows(), 0);
  Eigen::HouseholderQR<DenseMatrix> qr(basis);
  return qr.householderQ() * DenseMatrix::Identity(basis.rows(), basis.cols());
}

}  // namespace

std::string_view to_string(Refusal::Reason reason) {
  switch (reason) {
    case Refusal::Reason::NotSquare:
      return "not square";
    case Refusal::Reason::LambdaMaxAboveOne:
      return "lambda_max above one";
    case Refusal::Reason::NotSimilarToPsd:
      return "not similar to a PSD matrix";
    case Refusal::Reason::NoScalingFound:
      return "no scaling matrix found";
    case Refusal::Reason::NotDiagonalizable:
      return "not diagonalizable";
  }
  return "unknown";
}

Certification certify_proximable(const DenseMatrix& w, const std::optional<proximal::Metric>& hint) {
  using Reason = Refusal::Reason;
  if (w.rows() != w.cols() || w.rows() == 0) {
    return refuse(Reason::NotSquare, "W must be a non-empty square matrix", 0.0);
  }
  if (!w.allFinite()) return refuse(Reason::NotDiagonalizable, "W has non-finite entries", kInf);
  const Index n = w.rows();
  if (hint) require_size(hint->size(), n, "certify_proximable hint");

  std::optional<proximal::Metric> metric = hint ? hint : infer_metric(w);

  ProximableCertificate cert;
  cert.w = w;
  if (max_abs(w) == 0.0) {
    cert.metric = metric ? *metric : proximal::Metric::identity(n);
    cert.p = DenseMatrix::Zero(n, n);
    cert.range_basis = DenseMatrix(n, 0);
    cert.range_dual = DenseMatrix(0, n);
    cert.range_orthonormal = DenseMatrix(n, 0);
    cert.lambda_r = Vector(0);
    return cert;
  }
  if (!metric) {
    return refuse(Reason::NoScalingFound,
                  "W is neither symmetric nor a kernel denoiser; pass a scaling matrix", 0.0);
  }
  cert.metric = *metric;

  const DenseMatrix h_sqrt = matrix_of(n, [&](const Vector& e) { return metric->apply_sqrt(e); });
  const DenseMatrix h_inv_sqrt = matrix_of(n, [&](const Vector& e) { return metric->apply_inv_sqrt(e); });
  const DenseMatrix m = h_sqrt * w * h_inv_sqrt;
  const double asym = relative_asymmetry(m);
  if (asym > kSimilarityTolerance) {
    return refuse(Reason::NotSimilarToPsd, "H^{1/2} W H^{-1/2} is not symmetric", asym);
  }

  const auto eig = linops::symmetric_eig(0.5 * (m + m.transpose()));
  const double lmax = eig.eigenvalues[0];
  const double lmin = eig.eigenvalues[n - 1];
  if (lmin < -kSimilarityTolerance * std::max(1.0, std::abs(lmax))) {
    return refuse(Reason::NotSimilarToPsd, "H^{1/2} W H^{-1/2} has a negative eigenvalue", -lmin);
  }
  if (lmax > 1.0 + kLambdaMaxSlack) {
    return refuse(Reason::LambdaMaxAboveOne, "lambda_max(W) exceeds one", lmax);
  }

  const Index r = eig.rank;
  const DenseMatrix g_r = eig.eigenvectors.leftCols(r);
  const DenseMatrix v = h_inv_sqrt * eig.eigenvectors;
  const DenseMatrix vvt_h = v * v.transpose() * metric->to_dense();
  if (max_abs(vvt_h - DenseMatrix::Identity(n, n)) > 1e-8) {
    return refuse(Reason::NotDiagonalizable, "(V V^T)^{-1} does not reproduce H",
                  max_abs(vvt_h - DenseMatrix::Identity(n, n)));
  }

  cert.lambda_r = eig.eigenvalues.head(r).cwiseMin(1.0);
  cert.lambda_max = std::min(lmax, 1.0);
  cert.rank = r;
  cert.range_basis = v.leftCols(r);
  cert.range_dual = g_r.transpose() * h_sqrt;
  const Vector shrink = cert.lambda_r.cwiseInverse().array() - 1.0;
  const DenseMatrix p = cert.range_dual.transpose() * shrink.asDiagonal() * cert.range_dual;
  cert.p = 0.5 * (p + p.transpose());
  cert.range_orthonormal = orthonormal_range(cert.range_basis);
  return cert;
}

ProximableCertificate require_certificate(const DenseMatrix& w, const std::optional<proximal::Metric>& hint) {
  auto result = certify_proximable(w, hint);
  if (auto* refusal = std::get_if<Refusal>(&result)) {
    throw std::invalid_argument("W is not a scaled proximal map: " + refusal->detail + " (" +
                                std::to_string(refusal->magnitude) + ")");
  }
  return std::get<ProximableCertificate>(std::move(result));
}

double eval_phi_direct(const ProximableCertificate& cert, const Vector& x) {
  require_size(x.size(), cert.w.rows(), "eval_phi_direct");
  const double norm = x.norm();
  if (norm == 0.0) return 0.0;
  const DenseMatrix& q = cert.range_orthonormal;
  const Vector off_range = x - q * (q.transpose() * x);
  if (off_range.norm() > kRangeTolerance * norm) return kInf;
  return 0.5 * x.dot(cert.p * x);
}

double eval_phi_fast(const proximal::Metric& metric, const Vector& u, const Vector& q) {
  require_size(u.size(), metric.size(), "eval_phi_fast u");
  require_size(q.size(), metric.size(), "eval_phi_fast q");
  return 0.5 * (q - u).dot(metric.apply(u));
}

MoreauReport moreau_check(const DenseMatrix& w, const proximal::Metric& metric, int trials,
                          std::uint64_t seed) {
  if (w.rows() != w.cols()) throw DimensionError("moreau_check: W is not square");
  require_size(metric.size(), w.rows(), "moreau_check metric");
  const Index n = w.rows();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  auto random_vector = [&] {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal(rng);
    return v;
  };

  MoreauReport report;
  for (int t = 0; t < trials; ++t) {
    const Vector x = random_vector();
    const Vector y = random_vector();
    const double denom = metric.norm(x - y);
    if (denom == 0.0) continue;
    report.max_ratio = std::max(report.max_ratio, metric.norm(w * x - w * y) / denom);
  }
  report.nonexpansive = report.max_ratio <= 1.0 + kSimilarityTolerance;

  const DenseMatrix hw = metric.to_dense() * w;
  report.asymmetry = relative_asymmetry(hw);
  const DenseMatrix sym = 0.5 * (hw + hw.transpose());
  Eigen::SelfAdjointEigenSolver<DenseMatrix> solver(sym, Eigen::EigenvaluesOnly);
  const double spectral = std::max(solver.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  report.min_eigenvalue = solver.eigenvalues().minCoeff() / spectral;
  report.gradient_of_convex =
      report.asymmetry <= kSimilarityTolerance && report.min_eigenvalue >= -kSimilarityTolerance;
  return report;
}

ProxVerification verify_scaled_prox(const DenseMatrix& w, const ProximableCertificate& cert, int trials,
                                    std::uint64_t seed, double tolerance) {
  const Index n = w.rows();
  if (w.cols() != n) throw DimensionError("verify_scaled_prox: W is not square");
  require_size(cert.p.rows(), n, "verify_scaled_prox certificate");

  // Leading columns of a pivoted QR of W, at the numerical rank the certificate declares.
  Eigen::ColPivHouseholderQR<DenseMatrix> qr(w);
  const Index r = cert.rank;
  const DenseMatrix q = DenseMatrix(qr.householderQ()).leftCols(r);
  const DenseMatrix h = cert.metric.to_dense();
  const DenseMatrix reduced = q.transpose() * (h + cert.p) * q;
  Eigen::LDLT<DenseMatrix> ldlt(reduced);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  ProxVerification out;
  out.trials = trials;
  for (int t = 0; t < trials; ++t) {
    Vector y(n);
    for (Index i = 0; i < n; ++i) y[i] = normal(rng);
    Vector x = Vector::Zero(n);
    if (r > 0) x = q * ldlt.solve(q.transpose() * (h * y));
    const double err = (x - w * y).norm() / std::max(1.0, y.norm());
    out.max_error = std::max(out.max_error, err);
  }
  out.pass = out.max_error <= tolerance;
  return out;
}

CounterexampleInstance make_counterexample() {
  CounterexampleInstance ce;
  ce.a = Vector(2);
  ce.a << 0.8295, -0.5586;
  ce.b = 1.0;
  ce.d = Vector(2);
  ce.d << 0.3116, 0.5788;
  ce.k = DenseMatrix(2, 2);
  ce.k << 0.1102, 0.2014, 0.2014, 0.3774;

  const DenseMatrix eye = DenseMatrix::Identity(2, 2);
  ce.w = ce.d.cwiseInverse().asDiagonal() * ce.k;
  ce.c = eye + ce.a * ce.a.transpose();
  const DenseMatrix c_inv = ce.c.inverse();

  ce.r = DenseMatrix(4, 2);
  ce.r << ce.w, eye - ce.w;
  ce.s = DenseMatrix(2, 4);
  ce.s << c_inv, eye - c_inv;
  ce.t = DenseMatrix(2, 4);
  ce.t << (eye - ce.w) * c_inv, -(ce.w + c_inv - ce.w * c_inv);
  ce.offset = ce.b * ce.r * c_inv * ce.a;
  ce.q = ce.b * (eye - ce.w) * c_inv * ce.a;
  return ce;
}

CounterexampleReport run_counterexample(int max_k) {
  if (max_k < 1000) throw std::invalid_argument("run_counterexample: max_k must be >= 1000");
  const CounterexampleInstance ce = make_counterexample();
  const DenseMatrix transition = ce.r * ce.s;

  // Closed form: residual_j = ||T u_j + q|| with u_1 = 0, u_{j+1} = R S^T u_j + d.
  std::vector<double> recursion;
  recursion.reserve(static_cast<std::size_t>(max_k));
  Vector u = Vector::Zero(4);
  for (int j = 1; j <= max_k; ++j) {
    recursion.push_back((ce.t * u + ce.q).norm());
    u = transition * u + ce.offset;
  }

  // The same iteration through the solver.
  DenseMatrix a_row(1, 2);
  a_row.row(0) = ce.a.transpose();
  const proximal::QuadraticLoss loss(std::make_shared<linops::DenseOperator>(a_row),
                                     Vector::Constant(1, ce.b));
  const auto metric = proximal::Metric::diagonal(ce.d);
  auto denoiser = std::make_shared<denoisers::DenseDenoiser>(ce.w, metric);
  solvers::AdmmOptions options;
  options.rho = 1.0;
  options.max_iter = max_k;
  options.track_objective = false;
  options.prox.method = proximal::ProxOptions::Method::DenseDirect;

  denoisers::FixedDenoiser standard_schedule(denoiser);
  const auto standard =
      solvers::standard_pnp_admm(loss, standard_schedule, Vector::Zero(2), Vector::Zero(2), options);

  CounterexampleReport report;
  for (int j = 0; j < max_k; ++j) {
    const double live = standard.diagnostics.records[static_cast<std::size_t>(j)].residual;
    const double mismatch = std::abs(live - recursion[static_cast<std::size_t>(j)]) /
                            std::max(recursion[static_cast<std::size_t>(j)], 1e-300);
    report.max_solver_mismatch = std::max(report.max_solver_mismatch, mismatch);
  }
  if (report.max_solver_mismatch > kCounterexampleAgreement) {
    throw std::logic_error("run_counterexample: recursion and solver disagree (relative " +
                           std::to_string(report.max_solver_mismatch) + ")");
  }

  report.rows.reserve(static_cast<std::size_t>(max_k));
  report.rows.push_back({1, std::log(recursion[0])});
  for (int k = 2; k <= max_k; ++k) {
    report.rows.push_back({k, std::log(recursion[static_cast<std::size_t>(k - 2)])});
  }

  const auto right = linops::power_dominant_eig(transition);
  const auto left = linops::power_dominant_eig(transition.transpose());
  if (!right.converged || !left.converged) {
    throw ConvergenceError("run_counterexample: power iteration on R S^T did not converge",
                           std::max(right.residual, left.residual));
  }
  Eigen::EigenSolver<DenseMatrix> full(transition, false);
  const auto& spectrum = full.eigenvalues();
  Index dominant = 0;
  for (Index i = 1; i < spectrum.size(); ++i) {
    if (std::abs(spectrum[i]) > std::abs(spectrum[dominant])) dominant = i;
  }
  if (std::abs(spectrum[dominant].imag()) > 1e-12 ||
      std::abs(spectrum[dominant].real() - right.eigenvalue) > 1e-9) {
    throw std::logic_error("run_counterexample: dominant eigenvalue of R S^T is not the real power-method value");
  }
  report.dominant_eigenvalue = right.eigenvalue;
  report.offset_component = left.eigenvector.dot(ce.offset) / left.eigenvector.dot(right.eigenvector);
  report.t_v1_norm = (ce.t * right.eigenvector).norm();

  denoisers::FixedDenoiser scaled_schedule(denoiser);
  const auto scaled =
      solvers::scaled_pnp_admm(loss, scaled_schedule, Vector::Zero(2), Vector::Zero(2), options);
  report.scaled_residual = scaled.diagnostics.records.back().residual;
  return report;
}

void write_counterexample_csv(const CounterexampleReport& report, std::ostream& out) {
  out << "k,log_residual\n";
  char buf[64];
  for (const auto& row : report.rows) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), row.log_residual);
    if (ec != std::errc()) throw std::runtime_error("write_counterexample_csv: formatting failed");
    out << row.k << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf)) << '\n';
  }
}

}  // namespace pnp::theory
