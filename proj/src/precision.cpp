#include "tbm/precision.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "tbm/error.hpp"

namespace tbm {

SparseSymmetric::SparseSymmetric(SparseMatrix full) : matrix_(std::move(full)) {
  if (matrix_.rows() != matrix_.cols()) throw ValidationError("matrix is not square");
  matrix_.makeCompressed();
  const SparseMatrix transposed = matrix_.transpose();
  if (transposed.nonZeros() != matrix_.nonZeros())
    throw ValidationError("matrix is not structurally symmetric");
  for (Eigen::Index j = 0; j < matrix_.outerSize(); ++j) {
    SparseMatrix::InnerIterator a(matrix_, j), b(transposed, j);
    for (; a && b; ++a, ++b) {
      if (a.row() != b.row() || a.value() != b.value())
        throw ValidationError("matrix is not symmetric at column " + std::to_string(j));
      if (!std::isfinite(a.value()))
        throw NumericalError("matrix has a non-finite entry in column " + std::to_string(j));
    }
    if (a || b) throw ValidationError("matrix is not structurally symmetric");
  }
}

SparseSymmetric SparseSymmetric::from_lower(const SparseMatrix& lower) {
  SparseMatrix full = lower.selfadjointView<Eigen::Lower>();
  return SparseSymmetric(std::move(full));
}

void HyperParams::validate(int k) const {
  if (!(sigma_u > 0.0) || !std::isfinite(sigma_u))
    throw ValidationError("sigma_u must be positive and finite");
  if (!(range > 0.0) || !std::isfinite(range))
    throw ValidationError("range must be positive and finite");
  if (static_cast<int>(fractions.size()) != k)
    throw ValidationError("expected " + std::to_string(k) + " range fractions, got " +
                          std::to_string(fractions.size()));
  if (fractions.empty() || fractions.front() != 1.0)
    throw ValidationError("the normal-area fraction p_1 must be 1");
  for (std::size_t q = 0; q < fractions.size(); ++q) {
    if (!(fractions[q] > 0.0 && fractions[q] <= 1.0))
      throw ValidationError("range fraction p_" + std::to_string(q + 1) +
                            " must lie in (0, 1]");
  }
}

std::vector<double> stationary_fractions(int k) {
  return std::vector<double>(static_cast<std::size_t>(k), 1.0);
}

std::vector<double> barrier_fractions(int k, std::span<const int> impermeable_labels) {
  std::vector<double> fractions = stationary_fractions(k);
  for (int label : impermeable_labels) {
    if (label < 2 || label > k)
      throw ValidationError("impermeable label " + std::to_string(label) +
                            " outside [2, " + std::to_string(k) + "]");
    fractions[static_cast<std::size_t>(label - 1)] = kImpermeableFraction;
  }
  return fractions;
}

FractionBasis precompute_fraction_basis(const FemMatrices& fem,
                                        std::span<const double> fractions) {
  HyperParams probe{1.0, 1.0, {fractions.begin(), fractions.end()}};
  probe.validate(fem.k());
  FractionBasis basis;
  basis.fractions = probe.fractions;
  if (std::all_of(fractions.begin(), fractions.end(), [](double p) { return p == 1.0; })) {
    // Same arithmetic as a single-label assembly, so the stationary limit is exact.
    basis.C_tilde_p = fem.C_tilde_total;
    basis.G_p = fem.G_total;
  } else {
    basis.C_tilde_p = fem.C_tilde.front();
    basis.G_p = fem.G.front();
    for (std::size_t q = 1; q < fem.G.size(); ++q) {
      const double w = fractions[q] * fractions[q];
      basis.C_tilde_p += w * fem.C_tilde[q];
      basis.G_p += w * fem.G[q];
    }
  }
  for (Eigen::Index i = 0; i < basis.C_tilde_p.size(); ++i) {
    if (!(basis.C_tilde_p[i] > 0.0))
      throw NumericalError("lumped mass is zero at node " + std::to_string(i));
  }
  return basis;
}

PrecisionAssembler::PrecisionAssembler(const FemMatrices& fem,
                                       std::span<const double> fractions)
    : PrecisionAssembler(fem, precompute_fraction_basis(fem, fractions)) {}

PrecisionAssembler::PrecisionAssembler(const FemMatrices& fem, FractionBasis basis)
    : fem_(&fem), basis_(std::move(basis)) {
  if (basis_.C_tilde_p.size() != fem.n())
    throw ValidationError("fraction basis does not match the FEM matrices");
  // Lower triangle of the two-hop pattern of R = C + s G_p.
  const SparseMatrix R = fem.C + basis_.G_p;
  const Eigen::Index n = R.rows();
  std::vector<Eigen::Index> marker(static_cast<std::size_t>(n), -1);
  std::vector<Eigen::Triplet<double>> entries;
  std::vector<Eigen::Index> rows;
  for (Eigen::Index j = 0; j < n; ++j) {
    rows.clear();
    for (SparseMatrix::InnerIterator kt(R, j); kt; ++kt) {
      for (SparseMatrix::InnerIterator it(R, kt.row()); it; ++it) {
        const Eigen::Index i = it.row();
        if (i < j || marker[static_cast<std::size_t>(i)] == j) continue;
        marker[static_cast<std::size_t>(i)] = j;
        rows.push_back(i);
      }
    }
    for (Eigen::Index i : rows) entries.emplace_back(i, j, 0.0);
  }
  lower_pattern_.resize(n, n);
  lower_pattern_.setFromTriplets(entries.begin(), entries.end());
  lower_pattern_.makeCompressed();
}

SparseSymmetric PrecisionAssembler::assemble(double sigma_u, double range) const {
  if (!(sigma_u > 0.0) || !std::isfinite(sigma_u))
    throw ValidationError("sigma_u must be positive and finite");
  if (!(range > 0.0) || !std::isfinite(range))
    throw ValidationError("range must be positive and finite");

  const double r2 = range * range;
  const SparseMatrix R = fem_->C + (r2 / 8.0) * basis_.G_p;
  const Eigen::VectorXd inv_diag =
      ((std::numbers::pi * r2 / 2.0) * basis_.C_tilde_p).cwiseInverse();
  const double inv_sigma2 = 1.0 / (sigma_u * sigma_u);

  SparseMatrix lower = lower_pattern_;
  const Eigen::Index n = R.rows();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    // Column j of R D^{-1} R, accumulated in increasing k.
    for (SparseMatrix::InnerIterator kt(R, j); kt; ++kt) {
      const Eigen::Index k = kt.row();
      const double scaled = inv_diag[k] * kt.value();
      for (SparseMatrix::InnerIterator it(R, k); it; ++it) {
        if (it.row() >= j) acc[it.row()] += it.value() * scaled;
      }
    }
    for (SparseMatrix::InnerIterator it(lower, j); it; ++it) {
      it.valueRef() = acc[it.row()] * inv_sigma2;
      acc[it.row()] = 0.0;
    }
  }
  return SparseSymmetric::from_lower(lower);
}

SparseSymmetric assemble_Q(const FemMatrices& fem, const FractionBasis& basis,
                           double sigma_u, double range) {
  return PrecisionAssembler(fem, basis).assemble(sigma_u, range);
}

SparseSymmetric assemble_Q(const FemMatrices& fem, const HyperParams& hp) {
  hp.validate(fem.k());
  return PrecisionAssembler(fem, hp.fractions).assemble(hp.sigma_u, hp.range);
}

SparseSymmetric barrier_limit_Q(const FemMatrices& fem, double sigma_u, double range,
                                std::span<const int> impermeable_labels) {
  const auto fractions = barrier_fractions(fem.k(), impermeable_labels);
  return PrecisionAssembler(fem, fractions).assemble(sigma_u, range);
}

}  // namespace tbm
