#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "tbm/fem.hpp"

namespace tbm {

// Range fraction used for subdomains treated as impermeable.
inline constexpr double kImpermeableFraction = 0.01;

// Symmetric sparse matrix stored with both triangles. Construction checks
// that the matrix is square, exactly symmetric and finite.
class SparseSymmetric {
 public:
  SparseSymmetric() = default;
  explicit SparseSymmetric(SparseMatrix full);

  // Builds the full matrix from its lower triangle (entries above the
  // diagonal are ignored).
  static SparseSymmetric from_lower(const SparseMatrix& lower);

  Eigen::Index n() const { return matrix_.rows(); }
  const SparseMatrix& matrix() const { return matrix_; }

 private:
  SparseMatrix matrix_;
};

struct HyperParams {
  double sigma_u = 1.0;
  double range = 1.0;
  // p_1..p_k; p_1 must be 1.
  std::vector<double> fractions{1.0};

  void validate(int k) const;
};

// Stationary model with k subdomains (all fractions 1).
std::vector<double> stationary_fractions(int k);

// Fractions with kImpermeableFraction on the listed labels and 1 elsewhere.
std::vector<double> barrier_fractions(int k, std::span<const int> impermeable_labels);

// sum_q p_q^2 Ct_q and sum_q p_q^2 G_q for a fixed set of fractions.
struct FractionBasis {
  std::vector<double> fractions;
  Eigen::VectorXd C_tilde_p;
  SparseMatrix G_p;
};

FractionBasis precompute_fraction_basis(const FemMatrices& fem,
                                        std::span<const double> fractions);

// Assembles Q = (1/sigma^2) R Ct_r^{-1} R with
//   R    = C + (r^2/8) sum_q p_q^2 G_q
//   Ct_r = (pi r^2/2) sum_q p_q^2 Ct_q
// for varying (sigma_u, range) at fixed fractions. The sparsity pattern of
// R Ct_r^{-1} R is computed once.
class PrecisionAssembler {
 public:
  PrecisionAssembler(const FemMatrices& fem, std::span<const double> fractions);
  PrecisionAssembler(const FemMatrices& fem, FractionBasis basis);

  SparseSymmetric assemble(double sigma_u, double range) const;
  const FractionBasis& basis() const { return basis_; }

 private:
  const FemMatrices* fem_;
  FractionBasis basis_;
  SparseMatrix lower_pattern_;
};

SparseSymmetric assemble_Q(const FemMatrices& fem, const HyperParams& hp);
SparseSymmetric assemble_Q(const FemMatrices& fem, const FractionBasis& basis,
                           double sigma_u, double range);

// Barrier-model limit: kImpermeableFraction on the given labels.
SparseSymmetric barrier_limit_Q(const FemMatrices& fem, double sigma_u, double range,
                                std::span<const int> impermeable_labels);

}  // namespace tbm
