#include <doctest.h>

#include <numbers>
#include <random>

#include "support.hpp"
#include "tbm/error.hpp"
#include "tbm/precision.hpp"

using namespace tbm;

namespace {

Eigen::MatrixXd dense(const SparseSymmetric& q) { return testing::to_dense(q.matrix()); }

bool same_pattern(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.rows() != b.rows() || a.nonZeros() != b.nonZeros()) return false;
  for (Eigen::Index j = 0; j < a.outerSize(); ++j) {
    SparseMatrix::InnerIterator ia(a, j), ib(b, j);
    for (; ia && ib; ++ia, ++ib)
      if (ia.row() != ib.row()) return false;
    if (ia || ib) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("stationary precision expands into its four-term form") {
  const Mesh mesh = generate_rect_mesh({0, 3}, {0, 2}, {0.5, 0.5});
  const FemMatrices fem = assemble(mesh, SubdomainLabeling::all_normal(mesh));
  const double sigma = 1.7, r = 0.8;
  const Eigen::MatrixXd Q = dense(assemble_Q(fem, HyperParams{sigma, r, {1.0}}));

  const Eigen::MatrixXd C = testing::to_dense(fem.C), G = testing::to_dense(fem.G[0]);
  const Eigen::VectorXd dinv = fem.C_tilde[0].cwiseInverse();
  const double a = r * r / 8.0;
  const Eigen::MatrixXd expanded = C * dinv.asDiagonal() * C + a * (C * dinv.asDiagonal() * G) +
                                   a * (G * dinv.asDiagonal() * C) +
                                   a * a * (G * dinv.asDiagonal() * G);
  const Eigen::MatrixXd expected = expanded / (sigma * sigma * std::numbers::pi * r * r / 2.0);
  CHECK(testing::max_rel_diff(Q, expected) < 1e-12);
}

TEST_CASE("sparse assembly matches the dense reference") {
  const auto fx = testing::canal_fixture(1.0, 1.0);
  const FemMatrices fem = assemble(fx.mesh, fx.labeling);
  const auto dfem = testing::dense_fem(fx.mesh, fx.labeling);
  for (const HyperParams& hp : {HyperParams{1.0, 2.0, {1.0, 1.0}}, HyperParams{0.3, 4.0, {1.0, 0.01}},
                                HyperParams{2.5, 1.0, {1.0, 0.4}}}) {
    CHECK(testing::max_rel_diff(dense(assemble_Q(fem, hp)), testing::dense_Q(dfem, hp)) < 1e-12);
  }
}

TEST_CASE("fraction one on a second subdomain reproduces the single-domain model") {
  const auto fx = testing::canal_fixture(0.5, 1.0);
  const FemMatrices labeled = assemble(fx.mesh, fx.labeling);
  const FemMatrices single = assemble(fx.mesh, SubdomainLabeling::all_normal(fx.mesh));
  const Eigen::MatrixXd a = dense(assemble_Q(labeled, HyperParams{1.3, 2.0, {1.0, 1.0}}));
  const Eigen::MatrixXd b = dense(assemble_Q(single, HyperParams{1.3, 2.0, {1.0}}));
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("precision is exactly symmetric with a fixed pattern across hyperparameters") {
  const auto fx = testing::canal_fixture(0.5, 1.0);
  const FemMatrices fem = assemble(fx.mesh, fx.labeling);
  const SparseSymmetric q1 = assemble_Q(fem, HyperParams{1.0, 3.0, {1.0, 0.01}});
  const SparseSymmetric q2 = assemble_Q(fem, HyperParams{0.5, 1.0, {1.0, 0.7}});
  const SparseSymmetric q3 = barrier_limit_Q(fem, 2.0, 5.0, std::vector<int>{2});
  CHECK(same_pattern(q1.matrix(), q2.matrix()));
  CHECK(same_pattern(q1.matrix(), q3.matrix()));
  const SparseMatrix t = q1.matrix().transpose();
  CHECK(Eigen::MatrixXd(q1.matrix() - t).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cached fraction basis gives the same precision") {
  const auto fx = testing::thin_barrier_fixture(0.5, 1.0);
  const FemMatrices fem = assemble(fx.mesh, fx.labeling);
  const std::vector<double> p{1.0, 0.2};
  const PrecisionAssembler assembler(fem, p);
  for (double r : {0.5, 2.0, 6.0}) {
    const Eigen::MatrixXd a = dense(assembler.assemble(0.9, r));
    const Eigen::MatrixXd b = dense(assemble_Q(fem, HyperParams{0.9, r, p}));
    CHECK(testing::max_rel_diff(a, b) < 1e-14);
  }
}

TEST_CASE("range scaling law on a uniformly scaled mesh") {
  // Scaling coordinates and range by c: C and Ct grow as c^2, G is invariant,
  // so R grows as c^2, Ct_r as c^4 and Q is unchanged.
  const double c = 2.0;
  const Mesh base = generate_rect_mesh({0, 2}, {0, 2}, {0.5, 0.0});
  std::vector<Point> scaled;
  for (const auto& v : base.vertices()) scaled.push_back({c * v.x, c * v.y});
  const Mesh big(scaled, base.triangles());
  const FemMatrices fa = assemble(base, SubdomainLabeling::all_normal(base));
  const FemMatrices fb = assemble(big, SubdomainLabeling::all_normal(big));
  const Eigen::MatrixXd qa = dense(assemble_Q(fa, HyperParams{1.0, 1.5, {1.0}}));
  const Eigen::MatrixXd qb = dense(assemble_Q(fb, HyperParams{1.0, c * 1.5, {1.0}}));
  CHECK(testing::max_rel_diff(qb, qa) < 1e-13);
}

TEST_CASE("sigma scales the precision by 1/sigma^2") {
  const auto fx = testing::thin_barrier_fixture(1.0, 1.0);
  const FemMatrices fem = assemble(fx.mesh, fx.labeling);
  const Eigen::MatrixXd a = dense(assemble_Q(fem, HyperParams{1.0, 2.0, {1.0, 0.3}}));
  const Eigen::MatrixXd b = dense(assemble_Q(fem, HyperParams{3.0, 2.0, {1.0, 0.3}}));
  CHECK(testing::max_rel_diff(b, a / 9.0) < 1e-14);
}

TEST_CASE("precision is positive definite for random hyperparameters") {
  const auto fx = testing::canal_fixture(1.0, 1.0);
  const FemMatrices fem = assemble(fx.mesh, fx.labeling);
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> logu(-2.0, 2.0), pu(0.01, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const HyperParams hp{std::exp(logu(gen)), std::exp(logu(gen)), {1.0, pu(gen)}};
    const Eigen::MatrixXd Q = dense(assemble_Q(fem, hp));
    const double lo = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Q).eigenvalues().minCoeff();
    CHECK(lo > 0.0);
  }
}

TEST_CASE("hyperparameter validation") {
  const auto fx = testing::canal_fixture(1.0, 1.0);
  const FemMatrices fem = assemble(fx.mesh, fx.labeling);
  CHECK_THROWS_AS(assemble_Q(fem, HyperParams{1.0, 1.0, {1.0}}), ValidationError);
  CHECK_THROWS_AS(assemble_Q(fem, HyperParams{1.0, 1.0, {0.5, 1.0}}), ValidationError);
  CHECK_THROWS_AS(assemble_Q(fem, HyperParams{1.0, 1.0, {1.0, 0.0}}), ValidationError);
  CHECK_THROWS_AS(assemble_Q(fem, HyperParams{1.0, 1.0, {1.0, 1.5}}), ValidationError);
  CHECK_THROWS_AS(assemble_Q(fem, HyperParams{-1.0, 1.0, {1.0, 0.5}}), ValidationError);
  CHECK_THROWS_AS(assemble_Q(fem, HyperParams{1.0, 0.0, {1.0, 0.5}}), ValidationError);
  CHECK(barrier_fractions(3, std::vector<int>{3}) == std::vector<double>{1.0, 1.0, kImpermeableFraction});
  CHECK(stationary_fractions(2) == std::vector<double>{1.0, 1.0});
}

TEST_CASE("SparseSymmetric rejects asymmetric input") {
  Eigen::MatrixXd m(2, 2);
  m << 2, 1, 0.5, 2;
  CHECK_THROWS_AS(SparseSymmetric(SparseMatrix(m.sparseView())), ValidationError);
  Eigen::MatrixXd r(2, 3);
  r.setOnes();
  CHECK_THROWS_AS(SparseSymmetric(SparseMatrix(r.sparseView())), ValidationError);
}
