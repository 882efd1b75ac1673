#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pnp/common.hpp"
#include "pnp/proximal.hpp"

namespace pnp::theory {

/// Data showing W = prox_{Phi, ||.||_H} with Phi(x) = i_{R(W)}(x) + x^T P x / 2.
struct ProximableCertificate {
  DenseMatrix w;
  proximal::Metric metric = proximal::Metric::identity(0);
  DenseMatrix p;                 // Ud^T (Lambda_r^{-1} - I) Ud
  DenseMatrix range_basis;       // U, n x r, columns are eigenvectors of W
  DenseMatrix range_dual;        // Ud, r x n with Ud U = I
  DenseMatrix range_orthonormal; // orthonormal basis of R(W)
  Vector lambda_r;               // nonzero eigenvalues, descending
  double lambda_max = 0.0;
  Index rank = 0;
};

struct Refusal {
  enum class Reason { NotSquare, LambdaMaxAboveOne, NotSimilarToPsd, NoScalingFound, NotDiagonalizable };
  Reason reason;
  std::string detail;
  double magnitude = 0.0;  // size of the violation (e.g. lambda_max, or -lambda_min)
};

std::string_view to_string(Refusal::Reason reason);

using Certification = std::variant<ProximableCertificate, Refusal>;

inline constexpr double kSimilarityTolerance = 1e-9;
inline constexpr double kLambdaMaxSlack = 1e-10;
inline constexpr double kRangeTolerance = 1e-8;

/// Checks that H^{1/2} W H^{-1/2} is symmetric PSD with spectrum <= 1 and
/// builds Phi's data from its eigendecomposition. Without a hint, symmetric W
/// gets H = I and a nonnegative row-stochastic W gets H = D recovered from
/// detailed balance (normalized to D_0 = 1).
Certification certify_proximable(const DenseMatrix& w,
                                 const std::optional<proximal::Metric>& hint = std::nullopt);

/// Throws std::invalid_argument with the refusal text when W is not certified.
ProximableCertificate require_certificate(const DenseMatrix& w,
                                          const std::optional<proximal::Metric>& hint = std::nullopt);

/// Phi(x) from the certificate: +inf when dist(x, R(W)) > 1e-8 ||x||.
double eval_phi_direct(const ProximableCertificate& cert, const Vector& x);

/// Phi(u) = (q - u)^T H u / 2 for u = W q.
double eval_phi_fast(const proximal::Metric& metric, const Vector& u, const Vector& q);

struct MoreauReport {
  double max_ratio = 0.0;         // max ||Wx - Wy||_H / ||x - y||_H over trials
  double asymmetry = 0.0;         // ||HW - (HW)^T||_max / ||HW||_max
  double min_eigenvalue = 0.0;    // of sym(HW), relative to ||HW||_2
  bool nonexpansive = false;
  bool gradient_of_convex = false;
  bool pass() const { return nonexpansive && gradient_of_convex; }
};

MoreauReport moreau_check(const DenseMatrix& w, const proximal::Metric& metric, int trials,
                          std::uint64_t seed = 1);

struct ProxVerification {
  int trials = 0;
  double max_error = 0.0;  // max ||x* - Wy|| / max(1, ||y||)
  bool pass = false;
};

/// Solves argmin_{x in R(W)} ||x - y||_H^2 + x^T P x directly in a QR basis of
/// R(W) and compares the minimizer with Wy.
ProxVerification verify_scaled_prox(const DenseMatrix& w, const ProximableCertificate& cert,
                                    int trials, std::uint64_t seed = 1, double tolerance = 1e-8);

/// Two-pixel instance on which standard PnP-ADMM with a kernel denoiser diverges.
struct CounterexampleInstance {
  Vector a;         // forward operator is the single row a^T
  double b = 0.0;
  Vector d;         // diagonal of D
  DenseMatrix k;
  DenseMatrix w;    // D^{-1} K
  DenseMatrix c;    // I + a a^T
  DenseMatrix r;    // [W; I - W]
  DenseMatrix s;    // S^T = [C^{-1}, I - C^{-1}]
  DenseMatrix t;    // [(I - W) C^{-1}, -(W + C^{-1} - W C^{-1})]
  Vector offset;    // d = b R C^{-1} a
  Vector q;         // b (I - W) C^{-1} a
};

CounterexampleInstance make_counterexample();

struct CounterexampleRow {
  int k = 0;
  double log_residual = 0.0;
};

struct CounterexampleReport {
  std::vector<CounterexampleRow> rows;  // k = 1..max_k, natural log
  double max_solver_mismatch = 0.0;     // relative, recursion vs live solver
  double dominant_eigenvalue = 0.0;     // of R S^T
  double offset_component = 0.0;        // coefficient of d along the dominant eigenvector
  double t_v1_norm = 0.0;               // ||T v_1||
  double scaled_residual = 0.0;         // scaled ADMM ||x - z|| at k = max_k
};

inline constexpr double kCounterexampleAgreement = 1e-8;

/// Iterates the closed-form affine recursion and standard PnP-ADMM (rho = 1)
/// side by side from u_1 = 0. Row k >= 2 holds ln ||x_k - z_k||_2 = ln ||T u_{k-1} + q||;
/// row 1 holds ln ||q||, the first residual the solver produces. Throws
/// std::logic_error when recursion and solver disagree beyond 1e-8 relative.
CounterexampleReport run_counterexample(int max_k = 1000);

/// CSV with header k,log_residual.
void write_counterexample_csv(const CounterexampleReport& report, std::ostream& out);

}  // namespace pnp::theory
