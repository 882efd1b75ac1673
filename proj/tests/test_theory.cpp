#include <doctest.h>

#include <sstream>

#include "pnp/theory.hpp"
#include "test_support.hpp"

using namespace pnp;
using namespace pnp::theory;
using pnp::proximal::Metric;
using pnp::testing::Rng;

namespace {

DenseMatrix two_pixel_kernel() {
  DenseMatrix k(2, 2);
  k << 0.1102, 0.2014, 0.2014, 0.3774;
  return k;
}

Vector two_pixel_row_sums() {
  Vector d(2);
  d << 0.3116, 0.5788;
  return d;
}

Refusal::Reason refusal_reason(const Certification& c) {
  REQUIRE(std::holds_alternative<Refusal>(c));
  return std::get<Refusal>(c).reason;
}

}  // namespace

TEST_CASE("zero denoiser certifies with P = 0 and rank 0") {
  const auto cert = require_certificate(DenseMatrix::Zero(3, 3));
  CHECK(cert.rank == 0);
  CHECK(cert.p.cwiseAbs().maxCoeff() == 0.0);
  CHECK(eval_phi_direct(cert, Vector::Zero(3)) == 0.0);
  CHECK(std::isinf(eval_phi_direct(cert, Vector::Ones(3))));
}

TEST_CASE("two-pixel kernel denoiser is certified with H = D") {
  const DenseMatrix k = two_pixel_kernel();
  const Vector d = two_pixel_row_sums();
  const DenseMatrix w = d.cwiseInverse().asDiagonal() * k;
  const auto cert = require_certificate(w, Metric::diagonal(d));
  CHECK(cert.lambda_max == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cert.rank == 2);
  // K invertible: W = (H + P)^{-1} H gives P = D K^{-1} D - D.
  const DenseMatrix expected = d.asDiagonal() * k.inverse() * d.asDiagonal() - DenseMatrix(d.asDiagonal());
  CHECK(pnp::testing::max_abs_diff(cert.p, expected) <= 1e-8 * expected.cwiseAbs().maxCoeff());
}

TEST_CASE("row-stochastic W without a hint recovers D up to scale") {
  const Vector d = two_pixel_row_sums();
  const DenseMatrix w = d.cwiseInverse().asDiagonal() * two_pixel_kernel();
  const auto cert = require_certificate(w);
  const auto recovered = cert.metric.diagonal();
  REQUIRE(recovered);
  CHECK((*recovered)[0] == doctest::Approx(1.0));
  CHECK((*recovered)[1] / (*recovered)[0] == doctest::Approx(d[1] / d[0]).epsilon(1e-12));
}

TEST_CASE("symmetric W without a hint gets the identity metric") {
  Rng rng(1);
  const DenseMatrix w = pnp::testing::random_symmetric_with_spectrum(rng, 6, 0.0, 1.0);
  const auto cert = require_certificate(w);
  CHECK(cert.metric.is_identity());
}

TEST_CASE("refusals name the failed condition") {
  CHECK(refusal_reason(certify_proximable(DenseMatrix::Zero(2, 3))) == Refusal::Reason::NotSquare);

  const auto big = certify_proximable(1.5 * DenseMatrix::Identity(3, 3));
  CHECK(refusal_reason(big) == Refusal::Reason::LambdaMaxAboveOne);
  CHECK(std::get<Refusal>(big).magnitude == doctest::Approx(1.5));

  DenseMatrix rotation(2, 2);
  rotation << 0, -1, 1, 0;
  CHECK(refusal_reason(certify_proximable(rotation, Metric::identity(2))) == Refusal::Reason::NotSimilarToPsd);
  CHECK(refusal_reason(certify_proximable(rotation)) == Refusal::Reason::NoScalingFound);

  DenseMatrix indefinite(2, 2);
  indefinite << 0.5, 0, 0, -0.25;
  const auto neg = certify_proximable(indefinite);
  CHECK(refusal_reason(neg) == Refusal::Reason::NotSimilarToPsd);
  CHECK(std::get<Refusal>(neg).magnitude > 0.0);

  CHECK_THROWS_AS(require_certificate(1.5 * DenseMatrix::Identity(3, 3)), std::invalid_argument);
  CHECK_FALSE(to_string(Refusal::Reason::LambdaMaxAboveOne).empty());
}

TEST_CASE("Phi on a rank-deficient symmetric denoiser") {
  Vector diag(3);
  diag << 1.0, 0.5, 0.0;
  const auto cert = require_certificate(diag.asDiagonal().toDenseMatrix());
  CHECK(cert.rank == 2);
  Vector in_range(3), off_range(3), q(3);
  in_range << 3, 2, 0;
  off_range << 0, 0, 1;
  q << 3, 4, 0;
  CHECK(eval_phi_direct(cert, in_range) == doctest::Approx(2.0));
  CHECK(std::isinf(eval_phi_direct(cert, off_range)));
  CHECK(eval_phi_fast(Metric::identity(3), in_range, q) == doctest::Approx(2.0));
}

TEST_CASE("fast and direct Phi agree on random kernel denoisers") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = pnp::testing::uniform_index(rng, 2, 25);
    Vector d;
    const DenseMatrix w = pnp::testing::random_kernel_denoiser(rng, n, &d, 1.0);
    const auto cert = require_certificate(w, Metric::diagonal(d));
    const Vector q = pnp::testing::random_vector(rng, n);
    const Vector u = w * q;
    const double fast = eval_phi_fast(cert.metric, u, q);
    const double direct = eval_phi_direct(cert, u);
    CHECK(std::abs(fast - direct) <= 1e-6 * std::max(1.0, std::abs(direct)));
    CHECK(fast >= -1e-12);
  }
}

TEST_CASE("certificate properties over random kernel denoisers") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = pnp::testing::uniform_index(rng, 2, 30);
    Vector d;
    const DenseMatrix w = pnp::testing::random_kernel_denoiser(rng, n, &d);
    const auto cert = require_certificate(w, Metric::diagonal(d));
    CHECK(cert.lambda_max <= 1.0 + kLambdaMaxSlack);
    CHECK(pnp::testing::max_abs_diff(cert.p, cert.p.transpose()) <= 1e-8 * std::max(1.0, cert.p.norm()));
    Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(0.5 * (cert.p + cert.p.transpose()));
    CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * std::max(1.0, cert.p.norm()));
    CHECK(pnp::testing::max_abs_diff(cert.range_dual * cert.range_basis,
                                     DenseMatrix::Identity(cert.rank, cert.rank)) < 1e-8);

    const auto verified = verify_scaled_prox(w, cert, 10, static_cast<std::uint64_t>(trial));
    CHECK(verified.pass);
    CHECK(moreau_check(w, Metric::diagonal(d), 50, static_cast<std::uint64_t>(trial)).pass());
  }
}

TEST_CASE("2W - W^2 over a kernel denoiser is certified with the same D") {
  Rng rng(4);
  Vector d;
  const DenseMatrix w = pnp::testing::random_kernel_denoiser(rng, 12, &d);
  const DenseMatrix v = 2.0 * w - w * w;
  const auto cert = require_certificate(v, Metric::diagonal(d));
  CHECK(verify_scaled_prox(v, cert, 20).pass);
}

TEST_CASE("scaling H and P together leaves the prox unchanged") {
  Rng rng(5);
  Vector d;
  const DenseMatrix w = pnp::testing::random_kernel_denoiser(rng, 10, &d);
  const auto base = require_certificate(w, Metric::diagonal(d));
  for (double c : {0.01, 0.5, 7.0, 300.0}) {
    const auto scaled = require_certificate(w, Metric::diagonal(d).scaled(c));
    CHECK(pnp::testing::max_abs_diff(scaled.p, c * base.p) <= 1e-8 * std::max(1.0, c * base.p.norm()));
    CHECK(verify_scaled_prox(w, scaled, 10).pass);
  }
}

TEST_CASE("any H^{-1/2} S H^{1/2} with S symmetric and spectrum in [0,1] is certified") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = pnp::testing::uniform_index(rng, 2, 15);
    const DenseMatrix s = pnp::testing::random_symmetric_with_spectrum(rng, n, 0.0, 1.0);
    const DenseMatrix h = pnp::testing::random_symmetric_with_spectrum(rng, n, 0.5, 4.0);
    const Metric metric = Metric::dense(h);
    DenseMatrix w(n, n);
    for (Index j = 0; j < n; ++j) {
      w.col(j) = metric.apply_inv_sqrt(s * metric.apply_sqrt(DenseMatrix::Identity(n, n).col(j)));
    }
    const auto c = certify_proximable(w, metric);
    REQUIRE(std::holds_alternative<ProximableCertificate>(c));
    CHECK(verify_scaled_prox(w, std::get<ProximableCertificate>(c), 10).pass);
  }
}

TEST_CASE("Moreau check flags expansive and non-gradient maps") {
  const auto expansive = moreau_check(1.5 * DenseMatrix::Identity(4, 4), Metric::identity(4), 20);
  CHECK_FALSE(expansive.nonexpansive);
  DenseMatrix rotation(2, 2);
  rotation << 0, -1, 1, 0;
  const auto rot = moreau_check(rotation, Metric::identity(2), 20);
  CHECK(rot.nonexpansive);
  CHECK_FALSE(rot.gradient_of_convex);
  CHECK(rot.asymmetry > 0.5);
  DenseMatrix indefinite(2, 2);
  indefinite << 0.5, 0, 0, -0.25;
  const auto neg = moreau_check(indefinite, Metric::identity(2), 20);
  CHECK_FALSE(neg.gradient_of_convex);
  CHECK(neg.min_eigenvalue < 0.0);
}

TEST_CASE("kernel denoiser in the Euclidean metric fails the Moreau check") {
  // W = D^{-1} K is not symmetric unless D is a multiple of I.
  const Vector d = two_pixel_row_sums();
  const DenseMatrix w = d.cwiseInverse().asDiagonal() * two_pixel_kernel();
  CHECK_FALSE(moreau_check(w, Metric::identity(2), 20).gradient_of_convex);
  CHECK(moreau_check(w, Metric::diagonal(d), 20).pass());
}

TEST_CASE("standard ADMM diverges on the two-pixel counterexample") {
  const auto report = run_counterexample(1000);
  REQUIRE(report.rows.size() == 1000);
  CHECK(report.max_solver_mismatch <= kCounterexampleAgreement);
  CHECK(report.dominant_eigenvalue == doctest::Approx(1.0196164812167048).epsilon(1e-12));
  CHECK(report.dominant_eigenvalue > 1.0);
  CHECK(std::abs(report.offset_component) > 0.0);
  CHECK(report.t_v1_norm > 0.0);
  CHECK(report.rows.back().log_residual - report.rows.front().log_residual > 15.0);
  CHECK(report.scaled_residual <= 1e-12);

  // Reference rows, four decimals.
  const std::pair<int, double> reference[] = {{1, -0.6743},   {200, -0.1045}, {400, 3.7808},
                                              {600, 7.6662},  {800, 11.5515}, {1000, 15.4369}};
  for (const auto& [k, value] : reference) {
    CHECK(report.rows[static_cast<std::size_t>(k - 1)].k == k);
    CHECK(std::abs(report.rows[static_cast<std::size_t>(k - 1)].log_residual - value) <= 1e-3);
  }
  // Frozen reference values from the closed-form recursion.
  const std::pair<int, double> frozen[] = {{1, -0.67444},  {200, -0.10465}, {400, 3.78066},
                                           {600, 7.66597}, {800, 11.55128}, {1000, 15.43659}};
  for (const auto& [k, value] : frozen) {
    CHECK(std::abs(report.rows[static_cast<std::size_t>(k - 1)].log_residual - value) <= 1e-5);
  }
}

TEST_CASE("counterexample CSV layout") {
  CounterexampleReport r;
  r.rows = {{1, -0.5}, {2, 0.25}};
  std::ostringstream out;
  write_counterexample_csv(r, out);
  CHECK(out.str().rfind("k,log_residual\n1,", 0) == 0);
  CHECK_THROWS_AS(run_counterexample(10), std::invalid_argument);
}
