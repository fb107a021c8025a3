#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "tbm/precision.hpp"

namespace tbm {

// Seedable standard-normal stream. Not shareable between threads.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  Eigen::VectorXd normal_vector(Eigen::Index n);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// Fill-reducing ordering and the nonzero structure of the Cholesky factor.
// Reusable across matrices sharing a sparsity pattern.
class CholeskySymbolic {
 public:
  explicit CholeskySymbolic(const SparseMatrix& pattern);

  Eigen::Index n() const { return static_cast<Eigen::Index>(order_.size()); }
  // order()[k] is the original index placed at position k.
  const std::vector<Eigen::Index>& order() const { return order_; }
  const std::vector<Eigen::Index>& position() const { return position_; }
  const std::vector<Eigen::Index>& parent() const { return parent_; }
  const std::vector<Eigen::Index>& column_pointers() const { return col_ptr_; }
  Eigen::Index factor_nonzeros() const { return col_ptr_.back(); }

  // Upper triangle of P A P^T in compressed column form, suitable for the
  // row-by-row factorization.
  SparseMatrix permuted_upper(const SparseMatrix& full) const;

 private:
  std::vector<Eigen::Index> order_;
  std::vector<Eigen::Index> position_;
  std::vector<Eigen::Index> parent_;
  std::vector<Eigen::Index> col_ptr_;
};

// Selected elements of the inverse on the nonzero pattern of the factor, in
// permuted indexing.
class SelectedInverse {
 public:
  SelectedInverse(std::shared_ptr<const CholeskySymbolic> symbolic,
                  std::vector<Eigen::Index> row_index, std::vector<double> values);

  // Entry (i, j) of the inverse in original indexing, if it lies on the
  // factor pattern.
  std::optional<double> at(Eigen::Index i, Eigen::Index j) const;
  Eigen::VectorXd diagonal() const;

 private:
  std::shared_ptr<const CholeskySymbolic> symbolic_;
  std::vector<Eigen::Index> row_index_;
  std::vector<double> values_;
};

// Sparse Cholesky factorization P Q P^T = L L^T.
class Factorization {
 public:
  explicit Factorization(const SparseSymmetric& Q);
  Factorization(const SparseSymmetric& Q, std::shared_ptr<const CholeskySymbolic> symbolic);

  Eigen::Index n() const { return symbolic_->n(); }
  const CholeskySymbolic& symbolic() const { return *symbolic_; }
  std::shared_ptr<const CholeskySymbolic> symbolic_ptr() const { return symbolic_; }

  // x with Q x = b.
  Eigen::VectorXd solve(const Eigen::Ref<const Eigen::VectorXd>& b) const;
  double log_det() const;

  // n_samples independent draws from N(0, Q^{-1}), one per column.
  Eigen::MatrixXd sample(RandomSource& rng, Eigen::Index n_samples) const;
  // x with L^T P x = z; the map used by sample().
  Eigen::VectorXd color(const Eigen::Ref<const Eigen::VectorXd>& z) const;
  // z = L^T P x.
  Eigen::VectorXd whiten(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  // Takahashi recursion on the factor.
  SelectedInverse selected_inverse() const;

  // Lower-triangular factor in permuted indexing.
  SparseMatrix factor() const;

 private:
  std::shared_ptr<const CholeskySymbolic> symbolic_;
  std::vector<Eigen::Index> row_index_;
  std::vector<double> values_;

  void lower_solve_in_place(Eigen::VectorXd& x) const;
  void upper_solve_in_place(Eigen::VectorXd& x) const;
};

Factorization factorize(const SparseSymmetric& Q);

// sqrt(diag(Q^{-1})) from the selected inverse.
Eigen::VectorXd marginal_sd(const Factorization& handle);
// Reference path: one solve per unit vector.
Eigen::VectorXd marginal_sd_by_solves(const Factorization& handle);
Eigen::VectorXd marginal_sd_by_solves(const Factorization& handle,
                                      const std::vector<Eigen::Index>& nodes);

}  // namespace tbm
