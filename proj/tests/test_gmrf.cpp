#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tbm/error.hpp"
#include "tbm/gmrf.hpp"

using namespace tbm;

namespace {

SparseSymmetric stationary_Q(const MeshWithLabels& fx, double sigma, double range) {
  const FemMatrices fem = assemble(fx.mesh, SubdomainLabeling::all_normal(fx.mesh));
  return assemble_Q(fem, HyperParams{sigma, range, {1.0}});
}

double dense_logdet(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  double s = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) s += 2.0 * std::log(llt.matrixL()(i, i));
  return s;
}

}  // namespace

TEST_CASE("log determinant of diagonal matrices") {
  CHECK(factorize(testing::sparse_from_dense(Eigen::MatrixXd::Identity(5, 5))).log_det() == 0.0);
  const Eigen::MatrixXd d = 4.0 * Eigen::MatrixXd::Identity(5, 5);
  CHECK(factorize(testing::sparse_from_dense(d)).log_det() == doctest::Approx(5.0 * std::log(4.0)));
}

TEST_CASE("solve agrees with Gaussian elimination") {
  const Eigen::MatrixXd A = testing::random_spd(10, 5);
  Eigen::VectorXd b(10);
  for (int i = 0; i < 10; ++i) b[i] = std::sin(1.0 + i);
  const Eigen::VectorXd x = factorize(testing::sparse_from_dense(A)).solve(b);
  const Eigen::VectorXd ref = testing::gauss_solve(A, b);
  CHECK((x - ref).cwiseAbs().maxCoeff() / ref.cwiseAbs().maxCoeff() < 1e-8);
  CHECK_THROWS_AS(factorize(testing::sparse_from_dense(A)).solve(Eigen::VectorXd::Ones(3)), ValidationError);
}

TEST_CASE("solve recovers a known vector on a mesh precision") {
  const auto fx = testing::thin_barrier_fixture(0.5, 1.0);
  const SparseSymmetric Q = stationary_Q(fx, 1.0, 2.0);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(Q.n());
  const Eigen::VectorXd x = factorize(Q).solve(Q.matrix() * ones);
  CHECK((x - ones).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("fill-reducing ordering keeps the factor sparse") {
  const auto fx = testing::thin_barrier_fixture(0.25, 1.0);
  const SparseSymmetric Q = stationary_Q(fx, 1.0, 2.0);
  const Factorization f = factorize(Q);
  const double nnz_lower = static_cast<double>(Q.matrix().nonZeros() + Q.n()) / 2.0;
  // The envelope of Q in natural order bounds the fill of an unordered factor.
  double envelope = 0.0;
  for (Eigen::Index j = 0; j < Q.n(); ++j) {
    Eigen::Index lo = j;
    for (SparseMatrix::InnerIterator it(Q.matrix(), j); it; ++it) lo = std::min(lo, it.row());
    envelope += static_cast<double>(j - lo + 1);
  }
  const double fill = static_cast<double>(f.symbolic().factor_nonzeros());
  CHECK(fill < 12.0 * nnz_lower);
  CHECK(fill < 0.8 * envelope);
  CHECK(fill >= nnz_lower);
  // Factor reproduces P Q P^T.
  const SparseMatrix L = f.factor();
  const Eigen::MatrixXd LLt = Eigen::MatrixXd(L) * Eigen::MatrixXd(L).transpose();
  const Eigen::MatrixXd Qd = testing::to_dense(Q.matrix());
  const auto& order = f.symbolic().order();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < Q.n(); ++i)
    for (Eigen::Index j = 0; j < Q.n(); ++j)
      worst = std::max(worst, std::abs(LLt(i, j) - Qd(order[static_cast<std::size_t>(i)],
                                                     order[static_cast<std::size_t>(j)])));
  CHECK(worst < 1e-10 * Qd.cwiseAbs().maxCoeff());
}

TEST_CASE("log determinant matches a dense Cholesky") {
  const auto fx = testing::canal_fixture(1.0, 1.0);
  const FemMatrices fem = assemble(fx.mesh, fx.labeling);
  const SparseSymmetric Q = assemble_Q(fem, HyperParams{0.7, 3.0, {1.0, 0.05}});
  const double ref = dense_logdet(testing::to_dense(Q.matrix()));
  CHECK(factorize(Q).log_det() == doctest::Approx(ref).epsilon(1e-10));
}

TEST_CASE("selected inverse matches solves and the dense inverse") {
  const auto fx = testing::canal_fixture(1.0, 1.0);
  const FemMatrices fem = assemble(fx.mesh, fx.labeling);
  const SparseSymmetric Q = assemble_Q(fem, HyperParams{1.0, 2.5, {1.0, 0.1}});
  const Factorization f = factorize(Q);
  const Eigen::MatrixXd S = testing::to_dense(Q.matrix()).inverse();
  const Eigen::VectorXd sd = marginal_sd(f);
  const Eigen::VectorXd sd_solves = marginal_sd_by_solves(f);
  CHECK(((sd - sd_solves).array() / sd_solves.array()).abs().maxCoeff() < 1e-9);
  CHECK(((sd.array().square() - S.diagonal().array()) / S.diagonal().array()).abs().maxCoeff() < 1e-9);

  const SelectedInverse inv = f.selected_inverse();
  int checked = 0;
  for (Eigen::Index j = 0; j < Q.n(); ++j)
    for (SparseMatrix::InnerIterator it(Q.matrix(), j); it; ++it) {
      const auto v = inv.at(it.row(), j);
      REQUIRE(v.has_value());
      CHECK(std::abs(*v - S(it.row(), j)) < 1e-9 * S.diagonal().maxCoeff());
      ++checked;
    }
  CHECK(checked == Q.matrix().nonZeros());
}

TEST_CASE("sample covariance approaches the inverse precision") {
  Eigen::MatrixXd Q(5, 5);
  Q << 4, -1, 0, 0, -1,
      -1, 4, -1, 0, 0,
       0, -1, 4, -1, 0,
       0, 0, -1, 4, -1,
      -1, 0, 0, -1, 4;
  const Factorization f = factorize(testing::sparse_from_dense(Q));
  RandomSource rng(2024);
  const Eigen::Index m = 20000;
  const Eigen::MatrixXd X = f.sample(rng, m);
  const Eigen::MatrixXd emp = X * X.transpose() / static_cast<double>(m);
  const Eigen::MatrixXd S = Q.inverse();
  // Standard error of a second moment is at most sqrt(2/m) * max variance.
  const double tol = 5.0 * std::sqrt(2.0 / static_cast<double>(m)) * S.diagonal().maxCoeff();
  CHECK((emp - S).cwiseAbs().maxCoeff() < tol);
}

TEST_CASE("whiten inverts color") {
  const auto fx = testing::thin_barrier_fixture(1.0, 1.0);
  const Factorization f = factorize(stationary_Q(fx, 1.0, 3.0));
  RandomSource rng(7);
  const Eigen::VectorXd z = rng.normal_vector(f.n());
  CHECK((f.whiten(f.color(z)) - z).cwiseAbs().maxCoeff() < 1e-10);
  // x^T Q x = |whiten(x)|^2
  const Eigen::VectorXd x = rng.normal_vector(f.n());
  const SparseSymmetric Q = stationary_Q(fx, 1.0, 3.0);
  CHECK(f.whiten(x).squaredNorm() == doctest::Approx(x.dot(Q.matrix() * x)).epsilon(1e-10));
}

TEST_CASE("fixed seed gives identical samples") {
  const auto fx = testing::thin_barrier_fixture(1.0, 1.0);
  const Factorization f = factorize(stationary_Q(fx, 1.0, 3.0));
  RandomSource a(99), b(99), c(100);
  const Eigen::MatrixXd sa = f.sample(a, 3), sb = f.sample(b, 3), sc = f.sample(c, 3);
  CHECK(sa == sb);
  CHECK(sa != sc);
}

TEST_CASE("indefinite matrix reports the failing node") {
  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(6, 6);
  d(3, 3) = -1.0;
  try {
    factorize(testing::sparse_from_dense(d));
    FAIL("expected NotPositiveDefinite");
  } catch (const NotPositiveDefinite& e) {
    CHECK(e.pivot() == 3);
  }
}

TEST_CASE("shared symbolic analysis is reused across values") {
  const auto fx = testing::canal_fixture(1.0, 1.0);
  const FemMatrices fem = assemble(fx.mesh, fx.labeling);
  const PrecisionAssembler assembler(fem, std::vector<double>{1.0, 0.3});
  const Factorization first = factorize(assembler.assemble(1.0, 2.0));
  const SparseSymmetric q2 = assembler.assemble(0.5, 4.0);
  const Factorization second(q2, first.symbolic_ptr());
  CHECK(second.log_det() == doctest::Approx(factorize(q2).log_det()).epsilon(1e-12));
  Eigen::MatrixXd other = Eigen::MatrixXd::Constant(q2.n(), q2.n(), 0.01);
  other.diagonal().array() += 10.0;
  CHECK_THROWS_AS(Factorization(testing::sparse_from_dense(other), first.symbolic_ptr()), ValidationError);
}
