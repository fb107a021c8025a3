#pragma once

// Shared fixtures and dense reference computations for the test suites.
// Everything here is written independently of the sparse code paths it is
// used to check.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "tbm/fem.hpp"
#include "tbm/mesh.hpp"
#include "tbm/precision.hpp"

namespace tbm::testing {

#ifdef TBM_FIXTURE_DIR
inline const char* fixture_dir() { return TBM_FIXTURE_DIR; }
#endif

// Thin horizontal barrier band across the whole mesh.
inline MeshWithLabels thin_barrier_fixture(double max_edge = 0.25, double buffer = 2.5) {
  Mesh mesh = generate_rect_mesh({0, 10}, {0, 10}, {max_edge, buffer});
  const double lo = -buffer - 1.0, hi = 10.0 + buffer + 1.0;
  std::vector<RegionPolygon> regions{RegionPolygon::rectangle({lo, hi}, {4.5, 5.5}, 2)};
  SubdomainLabeling labels = classify_triangles(mesh, regions);
  return {std::move(mesh), std::move(labels)};
}

// Two barrier rectangles separated by a canal x in [4.4, 5.6].
inline MeshWithLabels canal_fixture(double max_edge = 0.25, double buffer = 2.5) {
  Mesh mesh = generate_rect_mesh({0, 10}, {0, 10}, {max_edge, buffer});
  const double lo = -buffer - 1.0, hi = 10.0 + buffer + 1.0;
  std::vector<RegionPolygon> regions{RegionPolygon::rectangle({lo, 4.4}, {4.5, 5.5}, 2),
                                     RegionPolygon::rectangle({5.6, hi}, {4.5, 5.5}, 2)};
  SubdomainLabeling labels = classify_triangles(mesh, regions);
  return {std::move(mesh), std::move(labels)};
}

// Dense copies of the FEM matrices, integrated triangle by triangle with the
// reference-element formulas.
struct DenseFem {
  Eigen::MatrixXd C;
  std::vector<Eigen::MatrixXd> G;
  std::vector<Eigen::VectorXd> C_tilde;
};

inline DenseFem dense_fem(const Mesh& mesh, const SubdomainLabeling& labels) {
  const auto n = static_cast<Eigen::Index>(mesh.n_nodes());
  DenseFem out;
  out.C = Eigen::MatrixXd::Zero(n, n);
  out.G.assign(static_cast<std::size_t>(labels.k()), Eigen::MatrixXd::Zero(n, n));
  out.C_tilde.assign(static_cast<std::size_t>(labels.k()), Eigen::VectorXd::Zero(n));
  for (std::size_t t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangle(t);
    Eigen::Matrix3d P;
    for (int c = 0; c < 3; ++c) P.row(c) << 1.0, mesh.vertex(tri[c]).x, mesh.vertex(tri[c]).y;
    const double area = 0.5 * std::abs(P.determinant());
    // Columns of P^{-1} hold (a, b, c) of the barycentric function a + b x + c y.
    const Eigen::Matrix3d coef = P.inverse();
    const auto q = static_cast<std::size_t>(labels.label(t) - 1);
    for (int a = 0; a < 3; ++a) {
      out.C_tilde[q][static_cast<Eigen::Index>(tri[a])] += area / 3.0;
      for (int b = 0; b < 3; ++b) {
        const auto i = static_cast<Eigen::Index>(tri[a]), j = static_cast<Eigen::Index>(tri[b]);
        out.C(i, j) += area * (a == b ? 1.0 / 6.0 : 1.0 / 12.0);
        out.G[q](i, j) += area * (coef(1, a) * coef(1, b) + coef(2, a) * coef(2, b));
      }
    }
  }
  return out;
}

inline Eigen::MatrixXd dense_Q(const DenseFem& fem, const HyperParams& hp) {
  const auto n = fem.C.rows();
  Eigen::MatrixXd Gp = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd Cp = Eigen::VectorXd::Zero(n);
  for (std::size_t q = 0; q < fem.G.size(); ++q) {
    const double w = hp.fractions[q] * hp.fractions[q];
    Gp += w * fem.G[q];
    Cp += w * fem.C_tilde[q];
  }
  const double r2 = hp.range * hp.range;
  const Eigen::MatrixXd R = fem.C + (r2 / 8.0) * Gp;
  const Eigen::VectorXd dinv = ((std::numbers::pi * r2 / 2.0) * Cp).cwiseInverse();
  return R * dinv.asDiagonal() * R / (hp.sigma_u * hp.sigma_u);
}

inline Eigen::MatrixXd to_dense(const SparseMatrix& m) { return Eigen::MatrixXd(m); }

inline double max_rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), 1e-300);
}

// log N(y; 0, S) through a dense Cholesky.
inline double dense_mvn_logpdf(const Eigen::VectorXd& y, const Eigen::MatrixXd& S) {
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  const Eigen::VectorXd z = llt.matrixL().solve(y);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < S.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi) + logdet +
                 z.squaredNorm());
}

inline Eigen::MatrixXd random_spd(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd A(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) A(i, j) = normal(gen);
  const Eigen::MatrixXd S = A * A.transpose() + Eigen::MatrixXd::Identity(n, n);
  return 0.5 * (S + S.transpose());
}

inline SparseSymmetric sparse_from_dense(const Eigen::MatrixXd& dense) {
  SparseMatrix m = dense.sparseView();
  return SparseSymmetric(m);
}

// Gaussian elimination with partial pivoting; independent of Eigen's solvers.
inline Eigen::VectorXd gauss_solve(Eigen::MatrixXd A, Eigen::VectorXd b) {
  const auto n = A.rows();
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::Index piv = c;
    for (Eigen::Index r = c + 1; r < n; ++r)
      if (std::abs(A(r, c)) > std::abs(A(piv, c))) piv = r;
    A.row(c).swap(A.row(piv));
    std::swap(b[c], b[piv]);
    for (Eigen::Index r = c + 1; r < n; ++r) {
      const double f = A(r, c) / A(c, c);
      A.row(r) -= f * A.row(c);
      b[r] -= f * b[c];
    }
  }
  Eigen::VectorXd x(n);
  for (Eigen::Index r = n - 1; r >= 0; --r) {
    double acc = b[r];
    for (Eigen::Index c = r + 1; c < n; ++c) acc -= A(r, c) * x[c];
    x[r] = acc / A(r, r);
  }
  return x;
}

}  // namespace tbm::testing
