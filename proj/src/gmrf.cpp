#include "tbm/gmrf.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/OrderingMethods>

#include "tbm/error.hpp"

namespace tbm {

namespace {

using Index = Eigen::Index;

// Pattern of row k of L, written to stack[top..n). `mark` uses k as the stamp.
Index ereach(const SparseMatrix& upper, Index k, const std::vector<Index>& parent,
             std::vector<Index>& stack, std::vector<Index>& mark) {
  const Index n = upper.cols();
  Index top = n;
  mark[static_cast<std::size_t>(k)] = k;
  for (SparseMatrix::InnerIterator it(upper, k); it; ++it) {
    Index i = it.row();
    if (i > k) continue;
    Index len = 0;
    for (; mark[static_cast<std::size_t>(i)] != k; i = parent[static_cast<std::size_t>(i)]) {
      stack[static_cast<std::size_t>(len++)] = i;
      mark[static_cast<std::size_t>(i)] = k;
    }
    while (len > 0) stack[static_cast<std::size_t>(--top)] = stack[static_cast<std::size_t>(--len)];
  }
  return top;
}

}  // namespace

Eigen::VectorXd RandomSource::normal_vector(Eigen::Index n) {
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = normal();
  return z;
}

// ---------------------------------------------------------------------------
// Symbolic analysis

CholeskySymbolic::CholeskySymbolic(const SparseMatrix& pattern) {
  if (pattern.rows() != pattern.cols()) throw ValidationError("matrix is not square");
  const Index n = pattern.rows();
  if (n == 0) throw ValidationError("matrix is empty");

  Eigen::AMDOrdering<int>::PermutationType perm;
  Eigen::AMDOrdering<int>()(pattern, perm);
  order_.resize(static_cast<std::size_t>(n));
  position_.resize(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    order_[static_cast<std::size_t>(k)] = perm.indices()[k];
    position_[static_cast<std::size_t>(perm.indices()[k])] = k;
  }

  const SparseMatrix upper = permuted_upper(pattern);
  parent_.assign(static_cast<std::size_t>(n), -1);
  std::vector<Index> ancestor(static_cast<std::size_t>(n), -1);
  for (Index k = 0; k < n; ++k) {
    for (SparseMatrix::InnerIterator it(upper, k); it; ++it) {
      for (Index i = it.row(); i != -1 && i < k;) {
        const Index next = ancestor[static_cast<std::size_t>(i)];
        ancestor[static_cast<std::size_t>(i)] = k;
        if (next == -1) parent_[static_cast<std::size_t>(i)] = k;
        i = next;
      }
    }
  }

  std::vector<Index> counts(static_cast<std::size_t>(n), 1);
  std::vector<Index> stack(static_cast<std::size_t>(n)), mark(static_cast<std::size_t>(n), -1);
  for (Index k = 0; k < n; ++k) {
    for (Index top = ereach(upper, k, parent_, stack, mark); top < n; ++top)
      ++counts[static_cast<std::size_t>(stack[static_cast<std::size_t>(top)])];
  }
  col_ptr_.assign(static_cast<std::size_t>(n) + 1, 0);
  for (Index k = 0; k < n; ++k)
    col_ptr_[static_cast<std::size_t>(k) + 1] =
        col_ptr_[static_cast<std::size_t>(k)] + counts[static_cast<std::size_t>(k)];
}

SparseMatrix CholeskySymbolic::permuted_upper(const SparseMatrix& full) const {
  const Index n = this->n();
  if (full.rows() != n || full.cols() != n)
    throw ValidationError("matrix dimension does not match the symbolic analysis");
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(full.nonZeros()) / 2 + static_cast<std::size_t>(n));
  for (Index j = 0; j < full.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(full, j); it; ++it) {
      const Index pi = position_[static_cast<std::size_t>(it.row())];
      const Index pj = position_[static_cast<std::size_t>(j)];
      if (pi <= pj) entries.emplace_back(pi, pj, it.value());
    }
  }
  SparseMatrix upper(n, n);
  upper.setFromTriplets(entries.begin(), entries.end());
  upper.makeCompressed();
  return upper;
}

// ---------------------------------------------------------------------------
// Numeric factorization

Factorization::Factorization(const SparseSymmetric& Q)
    : Factorization(Q, std::make_shared<const CholeskySymbolic>(Q.matrix())) {}

Factorization::Factorization(const SparseSymmetric& Q,
                             std::shared_ptr<const CholeskySymbolic> symbolic)
    : symbolic_(std::move(symbolic)) {
  const Index n = symbolic_->n();
  const SparseMatrix upper = symbolic_->permuted_upper(Q.matrix());
  const auto& Lp = symbolic_->column_pointers();
  const auto& parent = symbolic_->parent();
  row_index_.assign(static_cast<std::size_t>(Lp.back()), 0);
  values_.assign(static_cast<std::size_t>(Lp.back()), 0.0);

  std::vector<Index> next(Lp.begin(), Lp.end() - 1);
  std::vector<Index> stack(static_cast<std::size_t>(n)), mark(static_cast<std::size_t>(n), -1);
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);

  for (Index k = 0; k < n; ++k) {
    Index top = ereach(upper, k, parent, stack, mark);
    for (SparseMatrix::InnerIterator it(upper, k); it; ++it)
      x[static_cast<std::size_t>(it.row())] = it.value();
    double d = x[static_cast<std::size_t>(k)];
    x[static_cast<std::size_t>(k)] = 0.0;
    for (; top < n; ++top) {
      const auto i = static_cast<std::size_t>(stack[static_cast<std::size_t>(top)]);
      const double lki = x[i] / values_[static_cast<std::size_t>(Lp[i])];
      x[i] = 0.0;
      for (Index p = Lp[i] + 1; p < next[i]; ++p)
        x[static_cast<std::size_t>(row_index_[static_cast<std::size_t>(p)])] -=
            values_[static_cast<std::size_t>(p)] * lki;
      d -= lki * lki;
      const Index p = next[i]++;
      if (p >= Lp[i + 1]) throw ValidationError("matrix pattern differs from the symbolic analysis");
      row_index_[static_cast<std::size_t>(p)] = k;
      values_[static_cast<std::size_t>(p)] = lki;
    }
    if (!(d > 0.0) || !std::isfinite(d))
      throw NotPositiveDefinite(static_cast<std::size_t>(symbolic_->order()[static_cast<std::size_t>(k)]));
    const Index p = next[static_cast<std::size_t>(k)]++;
    row_index_[static_cast<std::size_t>(p)] = k;
    values_[static_cast<std::size_t>(p)] = std::sqrt(d);
  }
}

Factorization factorize(const SparseSymmetric& Q) { return Factorization(Q); }

void Factorization::lower_solve_in_place(Eigen::VectorXd& x) const {
  const auto& Lp = symbolic_->column_pointers();
  for (Index j = 0; j < n(); ++j) {
    const auto sj = static_cast<std::size_t>(j);
    x[j] /= values_[static_cast<std::size_t>(Lp[sj])];
    const double xj = x[j];
    for (Index p = Lp[sj] + 1; p < Lp[sj + 1]; ++p)
      x[row_index_[static_cast<std::size_t>(p)]] -= values_[static_cast<std::size_t>(p)] * xj;
  }
}

void Factorization::upper_solve_in_place(Eigen::VectorXd& x) const {
  const auto& Lp = symbolic_->column_pointers();
  for (Index j = n() - 1; j >= 0; --j) {
    const auto sj = static_cast<std::size_t>(j);
    double acc = x[j];
    for (Index p = Lp[sj] + 1; p < Lp[sj + 1]; ++p)
      acc -= values_[static_cast<std::size_t>(p)] * x[row_index_[static_cast<std::size_t>(p)]];
    x[j] = acc / values_[static_cast<std::size_t>(Lp[sj])];
  }
}

Eigen::VectorXd Factorization::solve(const Eigen::Ref<const Eigen::VectorXd>& b) const {
  if (b.size() != n())
    throw ValidationError("right-hand side has length " + std::to_string(b.size()) +
                          ", expected " + std::to_string(n()));
  const auto& order = symbolic_->order();
  Eigen::VectorXd y(n());
  for (Index k = 0; k < n(); ++k) y[k] = b[order[static_cast<std::size_t>(k)]];
  lower_solve_in_place(y);
  upper_solve_in_place(y);
  Eigen::VectorXd x(n());
  for (Index k = 0; k < n(); ++k) x[order[static_cast<std::size_t>(k)]] = y[k];
  return x;
}

double Factorization::log_det() const {
  const auto& Lp = symbolic_->column_pointers();
  double sum = 0.0;
  for (Index j = 0; j < n(); ++j) sum += std::log(values_[static_cast<std::size_t>(Lp[static_cast<std::size_t>(j)])]);
  return 2.0 * sum;
}

Eigen::VectorXd Factorization::color(const Eigen::Ref<const Eigen::VectorXd>& z) const {
  if (z.size() != n()) throw ValidationError("deviate vector has the wrong length");
  Eigen::VectorXd y = z;
  upper_solve_in_place(y);
  const auto& order = symbolic_->order();
  Eigen::VectorXd x(n());
  for (Index k = 0; k < n(); ++k) x[order[static_cast<std::size_t>(k)]] = y[k];
  return x;
}

Eigen::VectorXd Factorization::whiten(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != n()) throw ValidationError("vector has the wrong length");
  const auto& order = symbolic_->order();
  const auto& Lp = symbolic_->column_pointers();
  Eigen::VectorXd y(n());
  for (Index k = 0; k < n(); ++k) y[k] = x[order[static_cast<std::size_t>(k)]];
  Eigen::VectorXd z(n());
  for (Index j = 0; j < n(); ++j) {
    double acc = 0.0;
    for (Index p = Lp[static_cast<std::size_t>(j)]; p < Lp[static_cast<std::size_t>(j) + 1]; ++p)
      acc += values_[static_cast<std::size_t>(p)] * y[row_index_[static_cast<std::size_t>(p)]];
    z[j] = acc;
  }
  return z;
}

Eigen::MatrixXd Factorization::sample(RandomSource& rng, Eigen::Index n_samples) const {
  Eigen::MatrixXd out(n(), n_samples);
  for (Index s = 0; s < n_samples; ++s) out.col(s) = color(rng.normal_vector(n()));
  return out;
}

SparseMatrix Factorization::factor() const {
  const auto& Lp = symbolic_->column_pointers();
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(values_.size());
  for (Index j = 0; j < n(); ++j)
    for (Index p = Lp[static_cast<std::size_t>(j)]; p < Lp[static_cast<std::size_t>(j) + 1]; ++p)
      entries.emplace_back(row_index_[static_cast<std::size_t>(p)], j, values_[static_cast<std::size_t>(p)]);
  SparseMatrix L(n(), n());
  L.setFromTriplets(entries.begin(), entries.end());
  return L;
}

// ---------------------------------------------------------------------------
// Selected inversion

SelectedInverse Factorization::selected_inverse() const {
  const auto& Lp = symbolic_->column_pointers();
  std::vector<double> sigma(values_.size(), 0.0);
  std::vector<double> sums;
  for (Index i = n() - 1; i >= 0; --i) {
    const auto si = static_cast<std::size_t>(i);
    const auto p0 = static_cast<std::size_t>(Lp[si]);
    const std::size_t m = static_cast<std::size_t>(Lp[si + 1]) - p0 - 1;
    const double lii = values_[p0];
    sums.assign(m, 0.0);
    for (std::size_t a = 0; a < m; ++a) {
      const double la = values_[p0 + 1 + a];
      const auto ja = static_cast<std::size_t>(row_index_[p0 + 1 + a]);
      auto q = static_cast<std::size_t>(Lp[ja]);
      const auto q_end = static_cast<std::size_t>(Lp[ja + 1]);
      sums[a] += la * sigma[q];
      ++q;
      for (std::size_t b = a + 1; b < m; ++b) {
        const Index rb = row_index_[p0 + 1 + b];
        while (q < q_end && row_index_[q] < rb) ++q;
        if (q == q_end || row_index_[q] != rb)
          throw NumericalError("factor pattern is not closed under selected inversion");
        const double v = sigma[q];
        sums[a] += values_[p0 + 1 + b] * v;
        sums[b] += la * v;
      }
    }
    double diag_sum = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
      sigma[p0 + 1 + a] = -sums[a] / lii;
      diag_sum += values_[p0 + 1 + a] * sigma[p0 + 1 + a];
    }
    sigma[p0] = 1.0 / (lii * lii) - diag_sum / lii;
  }
  return SelectedInverse(symbolic_, row_index_, std::move(sigma));
}

SelectedInverse::SelectedInverse(std::shared_ptr<const CholeskySymbolic> symbolic,
                                 std::vector<Eigen::Index> row_index, std::vector<double> values)
    : symbolic_(std::move(symbolic)), row_index_(std::move(row_index)), values_(std::move(values)) {}

std::optional<double> SelectedInverse::at(Eigen::Index i, Eigen::Index j) const {
  const Index n = symbolic_->n();
  if (i < 0 || j < 0 || i >= n || j >= n) throw ValidationError("index out of range");
  const auto& pos = symbolic_->position();
  Index pi = pos[static_cast<std::size_t>(i)], pj = pos[static_cast<std::size_t>(j)];
  if (pi < pj) std::swap(pi, pj);
  const auto& Lp = symbolic_->column_pointers();
  const auto begin = row_index_.begin() + Lp[static_cast<std::size_t>(pj)];
  const auto end = row_index_.begin() + Lp[static_cast<std::size_t>(pj) + 1];
  const auto it = std::lower_bound(begin, end, pi);
  if (it == end || *it != pi) return std::nullopt;
  return values_[static_cast<std::size_t>(it - row_index_.begin())];
}

Eigen::VectorXd SelectedInverse::diagonal() const {
  const Index n = symbolic_->n();
  const auto& Lp = symbolic_->column_pointers();
  const auto& order = symbolic_->order();
  Eigen::VectorXd d(n);
  for (Index k = 0; k < n; ++k)
    d[order[static_cast<std::size_t>(k)]] = values_[static_cast<std::size_t>(Lp[static_cast<std::size_t>(k)])];
  return d;
}

Eigen::VectorXd marginal_sd(const Factorization& handle) {
  return handle.selected_inverse().diagonal().cwiseSqrt();
}

Eigen::VectorXd marginal_sd_by_solves(const Factorization& handle,
                                      const std::vector<Eigen::Index>& nodes) {
  Eigen::VectorXd sd(static_cast<Index>(nodes.size()));
  Eigen::VectorXd e = Eigen::VectorXd::Zero(handle.n());
  for (std::size_t s = 0; s < nodes.size(); ++s) {
    const Index i = nodes[s];
    if (i < 0 || i >= handle.n()) throw ValidationError("node index out of range");
    e[i] = 1.0;
    sd[static_cast<Index>(s)] = std::sqrt(handle.solve(e)[i]);
    e[i] = 0.0;
  }
  return sd;
}

Eigen::VectorXd marginal_sd_by_solves(const Factorization& handle) {
  std::vector<Eigen::Index> all(static_cast<std::size_t>(handle.n()));
  for (Index i = 0; i < handle.n(); ++i) all[static_cast<std::size_t>(i)] = i;
  return marginal_sd_by_solves(handle, all);
}

}  // namespace tbm
