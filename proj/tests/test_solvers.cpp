#include <doctest.h>

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <cstring>
#include <sstream>

#include "pnp/solvers.hpp"
#include "pnp/theory.hpp"
#include "test_support.hpp"

using namespace pnp;
using namespace pnp::solvers;
using pnp::testing::Rng;

namespace {

using denoisers::DenseDenoiser;
using denoisers::FixedDenoiser;
using proximal::Metric;
using proximal::QuadraticLoss;

struct KernelInstance {
  DenseMatrix w;
  Vector d;
  std::shared_ptr<linops::MaskOperator> mask;
  Vector b;
};

KernelInstance kernel_instance(std::uint64_t seed, Index n = 16) {
  Rng rng(seed);
  KernelInstance inst;
  inst.w = pnp::testing::random_kernel_denoiser(rng, n, &inst.d);
  std::vector<Index> kept;
  for (Index i = 0; i < n; ++i) {
    if (i % 2 == 0 || i % 3 == 0) kept.push_back(i);
  }
  inst.mask = std::make_shared<linops::MaskOperator>(n, kept);
  inst.b = pnp::testing::random_vector(rng, static_cast<Index>(kept.size()));
  return inst;
}

// min f(x) + rho Phi(x) over R(W): reduced solve in an orthonormal basis of R(W).
double direct_optimum(const KernelInstance& inst, double rho) {
  const auto cert = theory::require_certificate(inst.w, Metric::diagonal(inst.d));
  Eigen::ColPivHouseholderQR<DenseMatrix> qr(inst.w);
  qr.setThreshold(1e-10);
  const DenseMatrix q = DenseMatrix(qr.householderQ()).leftCols(qr.rank());
  const DenseMatrix a = inst.mask->to_dense();
  const DenseMatrix system = q.transpose() * (a.transpose() * a + rho * cert.p) * q;
  const Vector z = system.ldlt().solve(q.transpose() * a.transpose() * inst.b);
  const Vector x = q * z;
  return 0.5 * (a * x - inst.b).squaredNorm() + 0.5 * rho * x.dot(cert.p * x);
}

// 8x8 piecewise smooth test image.
Image restoration_scene() {
  Image img(8, 8);
  for (Index r = 0; r < 8; ++r) {
    for (Index c = 0; c < 8; ++c) img.at(r, c) = (c < 4 ? 0.2 : 0.7) + 0.02 * static_cast<double>(r);
  }
  return img;
}

std::shared_ptr<const denoisers::SymmetricDenoiser> symmetric_denoiser(Rng& rng, Index n) {
  const DenseMatrix w = pnp::testing::random_symmetric_with_spectrum(rng, n, 0.0, 1.0);
  denoisers::SparseMatrix s = w.sparseView();
  s = 0.5 * (s + denoisers::SparseMatrix(s.transpose()));
  return std::make_shared<denoisers::SymmetricDenoiser>(s, "test");
}

}  // namespace

TEST_CASE("momentum schedules") {
  const auto classical = MomentumSchedule::classical();
  double t = 1.0;
  for (int k = 1; k < 50; ++k) {
    const double next = classical.next(t, k);
    CHECK(next > t);
    CHECK(next == doctest::Approx(0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t))));
    t = next;
  }
  const auto chambolle = MomentumSchedule::chambolle(3.0);
  CHECK(chambolle.next(1.0, 1) == doctest::Approx(1.0 + 1.0 / 3.0));
  CHECK(chambolle.next(5.0, 9) == doctest::Approx(4.0));
  CHECK_THROWS_AS(MomentumSchedule::chambolle(2.0).next(1.0, 1), std::invalid_argument);
}

TEST_CASE("FISTA with W = I and A = I recovers b") {
  Rng rng(1);
  const Vector b = pnp::testing::random_vector(rng, 9);
  const QuadraticLoss loss(std::make_shared<linops::DiagonalOperator>(Vector::Ones(9)), b);
  denoisers::SparseMatrix eye(9, 9);
  eye.setIdentity();
  FixedDenoiser schedule(std::make_shared<denoisers::SymmetricDenoiser>(eye, "identity"));
  FistaOptions opts;
  opts.max_iter = 20;
  const auto result = scaled_pnp_fista(loss, schedule, Vector::Zero(9), opts);
  CHECK(result.rho == doctest::Approx(1.0));
  CHECK(pnp::testing::relative_error(result.solution, b) < 1e-14);
}

TEST_CASE("ADMM with W = I converges to the least-squares solution") {
  Rng rng(2);
  const DenseMatrix a = pnp::testing::random_matrix(rng, 12, 5);
  const Vector b = pnp::testing::random_vector(rng, 12);
  const QuadraticLoss loss(std::make_shared<linops::DenseOperator>(a), b);
  FixedDenoiser schedule(std::make_shared<DenseDenoiser>(DenseMatrix::Identity(5, 5), Metric::identity(5)));
  AdmmOptions opts;
  opts.max_iter = 500;
  opts.prox.method = proximal::ProxOptions::Method::DenseDirect;
  const auto result = scaled_pnp_admm(loss, schedule, Vector::Zero(5), Vector::Zero(5), opts);
  const Vector ls = (a.transpose() * a).ldlt().solve(a.transpose() * b);
  CHECK(pnp::testing::relative_error(result.x, ls) < 1e-9);
  CHECK(pnp::testing::relative_error(result.z, ls) < 1e-9);
}

TEST_CASE("scaled solvers with a symmetric denoiser match the standard ones bit for bit") {
  Rng rng(3);
  const Index n = 20;
  auto den = symmetric_denoiser(rng, n);
  const QuadraticLoss loss(std::make_shared<linops::DenseOperator>(pnp::testing::random_matrix(rng, 8, n)),
                           pnp::testing::random_vector(rng, 8));
  const Vector x0 = pnp::testing::random_vector(rng, n);
  FixedDenoiser s1(den), s2(den);

  FistaOptions fopts;
  fopts.max_iter = 60;
  const auto fa = scaled_pnp_fista(loss, s1, x0, fopts);
  const auto fb = standard_pnp_fista(loss, s2, x0, fopts);
  CHECK(fa.solution == fb.solution);
  REQUIRE(fa.diagnostics.records.size() == fb.diagnostics.records.size());
  for (std::size_t k = 0; k < fa.diagnostics.records.size(); ++k) {
    CHECK(fa.diagnostics.records[k].residual == fb.diagnostics.records[k].residual);
    CHECK(fa.diagnostics.records[k].objective == fb.diagnostics.records[k].objective);
  }

  AdmmOptions aopts;
  aopts.max_iter = 60;
  const Vector nu = pnp::testing::random_vector(rng, n);
  const auto aa = scaled_pnp_admm(loss, s1, x0, nu, aopts);
  const auto ab = standard_pnp_admm(loss, s2, x0, nu, aopts);
  CHECK(aa.x == ab.x);
  CHECK(aa.z == ab.z);
  CHECK(aa.nu == ab.nu);
}

TEST_CASE("scaled FISTA reaches the constrained optimum on a small kernel denoiser") {
  const auto inst = kernel_instance(4);
  const QuadraticLoss loss(inst.mask, inst.b);
  FixedDenoiser schedule(std::make_shared<DenseDenoiser>(inst.w, Metric::diagonal(inst.d)));
  FistaOptions opts;
  opts.max_iter = 20000;
  const auto result = scaled_pnp_fista(loss, schedule, Vector::Zero(16), opts);
  CHECK(result.rho == doctest::Approx(1.0 / inst.d.minCoeff()));
  const double p_star = direct_optimum(inst, result.rho);
  CHECK(std::abs(result.diagnostics.records.back().objective - p_star) <= 1e-6);
  for (const auto& r : result.diagnostics.records) CHECK(r.objective >= p_star - 1e-9);
}

TEST_CASE("scaled ADMM and scaled FISTA agree on the limit objective") {
  const auto inst = kernel_instance(5);
  const QuadraticLoss loss(inst.mask, inst.b);
  auto den = std::make_shared<DenseDenoiser>(inst.w, Metric::diagonal(inst.d));
  FixedDenoiser s1(den), s2(den);
  FistaOptions fopts;
  fopts.max_iter = 20000;
  const auto fista = scaled_pnp_fista(loss, s1, Vector::Zero(16), fopts);

  AdmmOptions aopts;
  aopts.rho = fista.rho;
  aopts.max_iter = 20000;
  const auto admm = scaled_pnp_admm(loss, s2, Vector::Zero(16), Vector::Zero(16), aopts);
  const double fa = fista.diagnostics.records.back().objective;
  const double aa = admm.diagnostics.records.back().objective;
  CHECK(std::abs(fa - aa) <= 1e-5);
  CHECK(std::abs(aa - direct_optimum(inst, fista.rho)) <= 1e-5);
  CHECK(admm.diagnostics.records.back().residual < 1e-6);
}

TEST_CASE("scaled ADMM iterates map onto standard ADMM in transformed coordinates") {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const Index n = pnp::testing::uniform_index(rng, 4, 40);
    Vector d;
    const DenseMatrix w = pnp::testing::random_kernel_denoiser(rng, n, &d);
    const DenseMatrix a = pnp::testing::random_matrix(rng, n / 2, n);
    const QuadraticLoss loss(std::make_shared<linops::DenseOperator>(a), pnp::testing::random_vector(rng, n / 2));
    const Metric h = Metric::diagonal(d);
    const Vector s = d.cwiseSqrt();
    const DenseMatrix w_tilde = s.asDiagonal() * w * s.cwiseInverse().asDiagonal();

    FixedDenoiser scaled_schedule(std::make_shared<DenseDenoiser>(w, h));
    FixedDenoiser standard_schedule(std::make_shared<DenseDenoiser>(w_tilde, Metric::identity(n)));
    const auto beta = proximal::compose_with_inv_sqrt(loss, h);

    const Vector z1 = pnp::testing::random_vector(rng, n);
    const Vector nu1 = pnp::testing::random_vector(rng, n);
    AdmmOptions opts;
    opts.rho = pnp::testing::uniform(rng, 0.5, 2.0);
    opts.max_iter = 1;
    opts.prox.method = proximal::ProxOptions::Method::DenseDirect;

    Vector z = z1, nu = nu1, zt = s.cwiseProduct(z1), nut = s.cwiseProduct(nu1);
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
      const auto a1 = scaled_pnp_admm(loss, scaled_schedule, z, nu, opts);
      const auto a2 = standard_pnp_admm(beta, standard_schedule, zt, nut, opts);
      worst = std::max({worst, pnp::testing::relative_error(s.cwiseProduct(a1.x), a2.x),
                        pnp::testing::relative_error(s.cwiseProduct(a1.z), a2.z),
                        pnp::testing::relative_error(s.cwiseProduct(a1.nu), a2.nu)});
      z = a1.z;
      nu = a1.nu;
      zt = a2.z;
      nut = a2.nu;
    }
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("dual update is nu + rho (x - z) at every step") {
  const auto inst = kernel_instance(7);
  const QuadraticLoss loss(inst.mask, inst.b);
  FixedDenoiser schedule(std::make_shared<DenseDenoiser>(inst.w, Metric::diagonal(inst.d)));
  AdmmOptions opts;
  opts.rho = 1.7;
  opts.max_iter = 40;
  Vector previous = Vector::Zero(16);
  double worst = 0.0;
  opts.observer = [&](const AdmmState& s) {
    const Vector expected = previous + s.rho * (s.x - s.z);
    worst = std::max(worst, (s.nu - expected).cwiseAbs().maxCoeff());
    previous = s.nu;
  };
  scaled_pnp_admm(loss, schedule, Vector::Zero(16), Vector::Zero(16), opts);
  CHECK(worst == 0.0);
}

TEST_CASE("residual records follow the definitions") {
  const auto inst = kernel_instance(8);
  const QuadraticLoss loss(inst.mask, inst.b);
  auto den = std::make_shared<DenseDenoiser>(inst.w, Metric::diagonal(inst.d));
  FixedDenoiser s1(den), s2(den);

  AdmmOptions aopts;
  aopts.max_iter = 5;
  std::vector<double> admm_res;
  aopts.observer = [&](const AdmmState& s) { admm_res.push_back((s.x - s.z).norm()); };
  const auto admm = scaled_pnp_admm(loss, s1, Vector::Zero(16), Vector::Zero(16), aopts);
  for (std::size_t k = 0; k < admm_res.size(); ++k) CHECK(admm.diagnostics.records[k].residual == admm_res[k]);

  FistaOptions fopts;
  fopts.max_iter = 5;
  std::vector<double> fista_res;
  fopts.observer = [&](const FistaState& s) { fista_res.push_back((s.x - s.x_prev).norm()); };
  const auto fista = scaled_pnp_fista(loss, s2, Vector::Zero(16), fopts);
  for (std::size_t k = 0; k < fista_res.size(); ++k) CHECK(fista.diagnostics.records[k].residual == fista_res[k]);
}

TEST_CASE("tolerance stops the iteration early") {
  const auto inst = kernel_instance(9);
  const QuadraticLoss loss(inst.mask, inst.b);
  FixedDenoiser schedule(std::make_shared<DenseDenoiser>(inst.w, Metric::diagonal(inst.d)));
  AdmmOptions opts;
  opts.max_iter = 100000;
  opts.tolerance = 1e-6;
  const auto result = scaled_pnp_admm(loss, schedule, Vector::Zero(16), Vector::Zero(16), opts);
  CHECK(result.diagnostics.records.size() < 100000);
  CHECK(result.diagnostics.records.back().residual < 1e-6);
}

TEST_CASE("objective is recorded only once the denoiser is frozen") {
  Rng rng(10);
  const Index side = 6;
  const Image gt = pnp::testing::random_image(rng, side, side);
  auto mask = std::make_shared<linops::MaskOperator>(side * side, std::vector<Index>{0, 5, 7, 11, 20, 30, 35});
  const QuadraticLoss loss(mask, mask->apply(gt.pixels));
  denoisers::FrozenDenoiser schedule(
      [](const Image& g) -> denoisers::DenoiserPtr { return denoisers::build_nlm(g, {1, 2, 0.3}); }, side, side,
      denoisers::kFistaFreezeAfter);
  FistaOptions opts;
  opts.max_iter = 12;
  const auto result = scaled_pnp_fista(loss, schedule, gt.pixels, opts);
  for (const auto& r : result.diagnostics.records) {
    if (r.k < denoisers::kFistaFreezeAfter) {
      CHECK(std::isnan(r.objective));
    } else {
      CHECK(std::isfinite(r.objective));
    }
  }
}

TEST_CASE("non-finite iterates abort with the iteration index") {
  Vector b = Vector::Ones(4);
  b[2] = std::numeric_limits<double>::quiet_NaN();
  const QuadraticLoss loss(std::make_shared<linops::DiagonalOperator>(Vector::Ones(4)), b);
  FixedDenoiser schedule(std::make_shared<DenseDenoiser>(0.5 * DenseMatrix::Identity(4, 4), Metric::identity(4)));
  try {
    scaled_pnp_admm(loss, schedule, Vector::Zero(4), Vector::Zero(4), AdmmOptions{});
    FAIL("expected SolverAbort");
  } catch (const SolverAbort& e) {
    CHECK(e.iteration() == 1);
  }
  CHECK_THROWS_AS(scaled_pnp_fista(loss, schedule, Vector::Zero(4), FistaOptions{}), SolverAbort);
}

TEST_CASE("a step parameter below the smoothness constant is flagged") {
  const auto inst = kernel_instance(11);
  const QuadraticLoss loss(inst.mask, inst.b);
  FixedDenoiser schedule(std::make_shared<DenseDenoiser>(inst.w, Metric::diagonal(inst.d)));
  FistaOptions opts;
  opts.rho = 0.5 / inst.d.minCoeff();
  opts.max_iter = 3;
  const auto result = scaled_pnp_fista(loss, schedule, Vector::Zero(16), opts);
  CHECK(result.diagnostics.warnings.size() == 1);
  opts.rho = 1.0 / inst.d.minCoeff();
  CHECK(scaled_pnp_fista(loss, schedule, Vector::Zero(16), opts).diagnostics.warnings.empty());
}

TEST_CASE("invalid solver options are rejected") {
  const QuadraticLoss loss(std::make_shared<linops::DiagonalOperator>(Vector::Ones(3)), Vector::Ones(3));
  FixedDenoiser schedule(std::make_shared<DenseDenoiser>(DenseMatrix::Identity(3, 3), Metric::identity(3)));
  AdmmOptions bad_rho;
  bad_rho.rho = 0.0;
  CHECK_THROWS_AS(scaled_pnp_admm(loss, schedule, Vector::Zero(3), Vector::Zero(3), bad_rho),
                  std::invalid_argument);
  CHECK_THROWS_AS(scaled_pnp_admm(loss, schedule, Vector::Zero(2), Vector::Zero(3), AdmmOptions{}), DimensionError);
  FistaOptions no_iter;
  no_iter.max_iter = 0;
  CHECK_THROWS_AS(scaled_pnp_fista(loss, schedule, Vector::Zero(3), no_iter), std::invalid_argument);
}

TEST_CASE("diagnostics CSV layout") {
  Diagnostics d;
  d.records.push_back({1, std::numeric_limits<double>::quiet_NaN(), 0.5, 20.25, 3.5});
  d.records.push_back({2, 1.125, 1e-9, 21.0, 7.0});
  std::ostringstream with_time, without_time;
  write_csv(d, with_time);
  write_csv(d, without_time, false);
  CHECK(with_time.str() == "k,objective,residual,psnr,time_ms\n1,nan,0.5,20.25,3.5\n2,1.125,1e-09,21,7\n");
  CHECK(without_time.str() == "k,objective,residual,psnr,time_ms\n1,nan,0.5,20.25,0\n2,1.125,1e-09,21,0\n");
}

TEST_CASE("standard ADMM with DSG-NLM drives the residual to zero on a small inpainting problem") {
  const Image gt = restoration_scene();
  auto mask = std::make_shared<linops::MaskOperator>(64, std::vector<Index>{0, 3, 5, 6, 9, 12, 14, 17, 18, 21, 23, 26, 28,
                                                                            31, 33, 34, 37, 40, 42, 45, 46, 49, 51, 52,
                                                                            55, 57, 58, 60, 63});
  const QuadraticLoss loss(mask, mask->apply(gt.pixels));
  denoisers::FrozenDenoiser schedule(
      [](const Image& g) -> denoisers::DenoiserPtr { return denoisers::build_dsg_nlm(g, {1, 2, 0.4}); }, 8, 8,
      denoisers::kAdmmFreezeAfter);
  AdmmOptions opts;
  opts.max_iter = 500;
  opts.tolerance = 1e-8;
  const auto result = standard_pnp_admm(loss, schedule, Vector::Constant(64, 0.5), Vector::Zero(64), opts);
  CHECK(result.diagnostics.records.back().residual < 1e-8);
  CHECK(result.diagnostics.records.size() <= 500);
}
