#pragma once

#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "migrate/error.hpp"
#include "migrate/geo.hpp"
#include "migrate/parallel.hpp"

namespace migrate {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Square non-negative sparse matrix of person flows for one year.  Entry
// (i, j) is the expected number of people living in CBG i at the start of the
// year and CBG j at the end; the diagonal holds non-movers.  Storage is
// compressed row-major with sorted column indices.  Construction rejects
// negative and non-finite values, and no library operation introduces them
// afterwards, so downstream code may assume entries are finite and >= 0.
class FlowMatrix {
 public:
  FlowMatrix() = default;
  FlowMatrix(Eigen::Index n, int year) : matrix_(n, n), year_(year) { matrix_.makeCompressed(); }

  static FlowMatrix from_triplets(Eigen::Index n, int year,
                                  const std::vector<Eigen::Triplet<double>>& entries);
  static FlowMatrix from_dense(const Eigen::MatrixXd& dense, int year);

  Eigen::Index dim() const { return matrix_.rows(); }
  int year() const { return year_; }
  void set_year(int year) { year_ = year; }
  Eigen::Index nonzeros() const { return matrix_.nonZeros(); }

  const SparseRowMatrix& storage() const { return matrix_; }
  SparseRowMatrix& storage() { return matrix_; }

  // Zero when the entry is not stored.
  double at(Eigen::Index i, Eigen::Index j) const { return matrix_.coeff(i, j); }

  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(matrix_); }

  double total() const;
  Eigen::VectorXd row_sums() const;
  Eigen::VectorXd col_sums() const;
  Eigen::VectorXd diagonal() const;

  // Drops stored zeros (scaling never creates them, but inputs may carry
  // explicit zeros).
  void prune();

 private:
  SparseRowMatrix matrix_;
  int year_ = 0;
};

// Row/column selector for scale_block: either every block or one block of a
// partition.
struct BlockSel {
  const BlockPartition* part = nullptr;  // null selects everything
  int block = 0;

  static BlockSel all() { return {}; }
  static BlockSel of(const BlockPartition& p, int b) { return {&p, b}; }
};

enum class DiagonalMode { All, Only, Exclude };

void check_partition(const FlowMatrix& m, const BlockPartition& p);

// Sum of entries within each (row block, column block) cell.  Compensated
// summation in fixed chunk order keeps the result bit-stable across thread
// counts.
Eigen::MatrixXd block_sum(const FlowMatrix& m, const BlockPartition& rows,
                          const BlockPartition& cols);

struct DiagOffdiagSums {
  Eigen::VectorXd diag;     // per block: entries with i == j, both in the block
  Eigen::VectorXd offdiag;  // per block: entries with i != j and the COLUMN in the block
};

// Diagonal mass and incoming off-diagonal mass per block of `p`.
DiagOffdiagSums split_diag_offdiag(const FlowMatrix& m, const BlockPartition& p);

// Sum of |a - b| over the union sparsity pattern.
double l1_distance(const FlowMatrix& a, const FlowMatrix& b);

// Multiplies entries whose row lies in `rows` and column lies in `cols`
// (restricted by `mode`) by `factor`.  Untargeted entries are returned
// bit-identical.  factor must be finite and > 0.
FlowMatrix scale_block(FlowMatrix m, BlockSel rows, BlockSel cols, double factor,
                       DiagonalMode mode = DiagonalMode::All);

// In-place visitor over stored entries: fn(row, col, value&).  Runs in fixed
// row chunks, possibly in parallel; each entry is touched exactly once.
template <class Fn>
void transform_entries(FlowMatrix& m, const Fn& fn) {
  SparseRowMatrix& s = m.storage();
  parallel_rows(s.rows(), [&](Eigen::Index begin, Eigen::Index end) {
    for (Eigen::Index i = begin; i < end; ++i)
      for (SparseRowMatrix::InnerIterator it(s, i); it; ++it) fn(i, it.col(), it.valueRef());
  });
}

// Read-only visitor, serial, in storage order.
template <class Fn>
void for_each_entry(const FlowMatrix& m, const Fn& fn) {
  const SparseRowMatrix& s = m.storage();
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (SparseRowMatrix::InnerIterator it(s, i); it; ++it) fn(i, it.col(), it.value());
}

// Per-block factor passes used by the harmonizer and the synthetic
// perturbations.  Factors must be finite and > 0 (use 1.0 to leave a block
// untouched; multiplying by exactly 1.0 leaves values bit-identical).
void apply_row_factors(FlowMatrix& m, const BlockPartition& p, const Eigen::VectorXd& f);
void apply_col_factors(FlowMatrix& m, const BlockPartition& p, const Eigen::VectorXd& f);
// Entry (i, j) gets diag_f[block(j)] when i == j, offdiag_f[block(j)] otherwise.
void apply_diag_offdiag_col_factors(FlowMatrix& m, const BlockPartition& p,
                                    const Eigen::VectorXd& diag_f,
                                    const Eigen::VectorXd& offdiag_f);
// Entry (i, j) gets f(rows.block(i), cols.block(j)).
void apply_pair_factors(FlowMatrix& m, const BlockPartition& rows, const BlockPartition& cols,
                        const Eigen::MatrixXd& f);

// Kahan-compensated block sums of an arbitrary entry functional, shared by the
// reductions above.  fn(i, j, v) -> contribution to cell (rows.block(i),
// cols.block(j)).
Eigen::VectorXd block_row_sums(const FlowMatrix& m, const BlockPartition& p);
Eigen::VectorXd block_col_sums(const FlowMatrix& m, const BlockPartition& p);

}  // namespace migrate
