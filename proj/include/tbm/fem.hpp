#pragma once

#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "tbm/mesh.hpp"

namespace tbm {

using SparseMatrix = Eigen::SparseMatrix<double>;

// P1 finite-element matrices over a labeled mesh.
//
//   C_ij        = <psi_i, psi_j>                  (whole domain)
//   (G_q)_ij    = <1_{Omega_q} grad psi_i, grad psi_j>
//   (Ct_q)_ii   = <1_{Omega_q} psi_i, 1>          (lumped, stored as a vector)
//
// Index q runs over labels 1..k and is stored at position q-1.
struct FemMatrices {
  SparseMatrix C;
  std::vector<SparseMatrix> G;
  std::vector<Eigen::VectorXd> C_tilde;

  // Whole-domain G and Ct, accumulated triangle by triangle exactly as a
  // single-label assembly would be.
  SparseMatrix G_total;
  Eigen::VectorXd C_tilde_total;

  int k() const { return static_cast<int>(G.size()); }
  Eigen::Index n() const { return C.rows(); }

  const SparseMatrix& global_G() const { return G_total; }
  const Eigen::VectorXd& global_C_tilde() const { return C_tilde_total; }
};

FemMatrices assemble(const Mesh& mesh, const SubdomainLabeling& labeling);

// Trace of each lumped mass matrix, i.e. the area of every subdomain.
std::vector<double> total_area_per_subdomain(const FemMatrices& fem);

}  // namespace tbm
