#include "migrate/flow_matrix.hpp"

#include <cmath>
#include <string>

namespace migrate {

namespace {

void check_value(double v) {
  if (!std::isfinite(v)) fail(ErrorCode::NonFiniteInput, "flow entry " + std::to_string(v));
  if (v < 0.0) fail(ErrorCode::NegativeEntry, "flow entry " + std::to_string(v));
}

void check_factor(double f) {
  if (!std::isfinite(f) || f <= 0.0)
    fail(ErrorCode::NonPositiveFactor, "scale factor " + std::to_string(f));
}

void check_factors(const Eigen::VectorXd& f, const BlockPartition& p) {
  if (f.size() != p.block_count)
    fail(ErrorCode::LengthMismatch, "factor vector length " + std::to_string(f.size()) +
                                        " for " + std::to_string(p.block_count) + " blocks");
  for (Eigen::Index i = 0; i < f.size(); ++i) check_factor(f[i]);
}

}  // namespace

void check_partition(const FlowMatrix& m, const BlockPartition& p) {
  if (p.size() != m.dim() || p.block_count <= 0)
    fail(ErrorCode::PartitionMismatch,
         "partition over " + std::to_string(p.size()) + " cbgs applied to a " +
             std::to_string(m.dim()) + "-dim matrix");
}

FlowMatrix FlowMatrix::from_triplets(Eigen::Index n, int year,
                                     const std::vector<Eigen::Triplet<double>>& entries) {
  for (const auto& t : entries) {
    if (t.row() < 0 || t.row() >= n || t.col() < 0 || t.col() >= n)
      fail(ErrorCode::DimensionMismatch, "entry outside a " + std::to_string(n) + "-dim matrix");
    check_value(t.value());
  }
  FlowMatrix m(n, year);
  m.matrix_.setFromTriplets(entries.begin(), entries.end());
  m.prune();
  return m;
}

FlowMatrix FlowMatrix::from_dense(const Eigen::MatrixXd& dense, int year) {
  if (dense.rows() != dense.cols())
    fail(ErrorCode::DimensionMismatch, "flow matrix must be square");
  std::vector<Eigen::Triplet<double>> ts;
  for (Eigen::Index i = 0; i < dense.rows(); ++i)
    for (Eigen::Index j = 0; j < dense.cols(); ++j)
      if (dense(i, j) != 0.0) ts.emplace_back(static_cast<int>(i), static_cast<int>(j), dense(i, j));
  return from_triplets(dense.rows(), year, ts);
}

void FlowMatrix::prune() {
  matrix_.prune(0.0, 0.0);
  matrix_.makeCompressed();
}

double FlowMatrix::total() const {
  return chunked_reduce<KahanSum>(
             dim(), [] { return KahanSum{}; },
             [&](KahanSum& acc, Eigen::Index begin, Eigen::Index end) {
               for (Eigen::Index i = begin; i < end; ++i)
                 for (SparseRowMatrix::InnerIterator it(matrix_, i); it; ++it) acc.add(it.value());
             },
             [](KahanSum& a, const KahanSum& b) { a.merge(b); })
      .value();
}

Eigen::VectorXd FlowMatrix::row_sums() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim());
  parallel_rows(dim(), [&](Eigen::Index begin, Eigen::Index end) {
    for (Eigen::Index i = begin; i < end; ++i) {
      KahanSum acc;
      for (SparseRowMatrix::InnerIterator it(matrix_, i); it; ++it) acc.add(it.value());
      out[i] = acc.value();
    }
  });
  return out;
}

Eigen::VectorXd FlowMatrix::col_sums() const {
  return chunked_reduce<KahanVector>(
             dim(), [&] { return KahanVector(dim()); },
             [&](KahanVector& acc, Eigen::Index begin, Eigen::Index end) {
               for (Eigen::Index i = begin; i < end; ++i)
                 for (SparseRowMatrix::InnerIterator it(matrix_, i); it; ++it)
                   acc.add(it.col(), it.value());
             },
             [](KahanVector& a, const KahanVector& b) { a.merge(b); })
      .sum;
}

Eigen::VectorXd FlowMatrix::diagonal() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim());
  parallel_rows(dim(), [&](Eigen::Index begin, Eigen::Index end) {
    for (Eigen::Index i = begin; i < end; ++i) out[i] = matrix_.coeff(i, i);
  });
  return out;
}

Eigen::MatrixXd block_sum(const FlowMatrix& m, const BlockPartition& rows,
                          const BlockPartition& cols) {
  check_partition(m, rows);
  check_partition(m, cols);
  // Flattened (row block, col block) table with per-cell compensation.
  Eigen::Index cells = static_cast<Eigen::Index>(rows.block_count) * cols.block_count;
  KahanVector acc = chunked_reduce<KahanVector>(
      m.dim(), [&] { return KahanVector(cells); },
      [&](KahanVector& part, Eigen::Index begin, Eigen::Index end) {
        const SparseRowMatrix& s = m.storage();
        for (Eigen::Index i = begin; i < end; ++i) {
          Eigen::Index rb = rows.block_of(i);
          for (SparseRowMatrix::InnerIterator it(s, i); it; ++it)
            part.add(rb * cols.block_count + cols.block_of(it.col()), it.value());
        }
      },
      [](KahanVector& a, const KahanVector& b) { a.merge(b); });
  Eigen::MatrixXd out(rows.block_count, cols.block_count);
  for (int r = 0; r < rows.block_count; ++r)
    for (int c = 0; c < cols.block_count; ++c)
      out(r, c) = acc.sum[static_cast<Eigen::Index>(r) * cols.block_count + c];
  return out;
}

DiagOffdiagSums split_diag_offdiag(const FlowMatrix& m, const BlockPartition& p) {
  check_partition(m, p);
  // One flattened accumulator: [0, B) diagonal mass, [B, 2B) off-diagonal
  // incoming mass.
  Eigen::Index b = p.block_count;
  KahanVector acc = chunked_reduce<KahanVector>(
      m.dim(), [&] { return KahanVector(2 * b); },
      [&](KahanVector& part, Eigen::Index begin, Eigen::Index end) {
        const SparseRowMatrix& s = m.storage();
        for (Eigen::Index i = begin; i < end; ++i)
          for (SparseRowMatrix::InnerIterator it(s, i); it; ++it) {
            Eigen::Index cell = p.block_of(it.col());
            part.add(i == it.col() ? cell : b + cell, it.value());
          }
      },
      [](KahanVector& a, const KahanVector& b2) { a.merge(b2); });
  return {acc.sum.head(b), acc.sum.tail(b)};
}

Eigen::VectorXd block_row_sums(const FlowMatrix& m, const BlockPartition& p) {
  check_partition(m, p);
  return chunked_reduce<KahanVector>(
             m.dim(), [&] { return KahanVector(p.block_count); },
             [&](KahanVector& part, Eigen::Index begin, Eigen::Index end) {
               const SparseRowMatrix& s = m.storage();
               for (Eigen::Index i = begin; i < end; ++i) {
                 Eigen::Index cell = p.block_of(i);
                 for (SparseRowMatrix::InnerIterator it(s, i); it; ++it) part.add(cell, it.value());
               }
             },
             [](KahanVector& a, const KahanVector& b) { a.merge(b); })
      .sum;
}

Eigen::VectorXd block_col_sums(const FlowMatrix& m, const BlockPartition& p) {
  check_partition(m, p);
  return chunked_reduce<KahanVector>(
             m.dim(), [&] { return KahanVector(p.block_count); },
             [&](KahanVector& part, Eigen::Index begin, Eigen::Index end) {
               const SparseRowMatrix& s = m.storage();
               for (Eigen::Index i = begin; i < end; ++i)
                 for (SparseRowMatrix::InnerIterator it(s, i); it; ++it)
                   part.add(p.block_of(it.col()), it.value());
             },
             [](KahanVector& a, const KahanVector& b) { a.merge(b); })
      .sum;
}

double l1_distance(const FlowMatrix& a, const FlowMatrix& b) {
  if (a.dim() != b.dim())
    fail(ErrorCode::DimensionMismatch, "l1 distance between " + std::to_string(a.dim()) +
                                           "- and " + std::to_string(b.dim()) + "-dim matrices");
  return chunked_reduce<KahanSum>(
             a.dim(), [] { return KahanSum{}; },
             [&](KahanSum& acc, Eigen::Index begin, Eigen::Index end) {
               const SparseRowMatrix& sa = a.storage();
               const SparseRowMatrix& sb = b.storage();
               for (Eigen::Index i = begin; i < end; ++i) {
                 SparseRowMatrix::InnerIterator ia(sa, i), ib(sb, i);
                 while (ia || ib) {
                   if (ia && (!ib || ia.col() < ib.col())) {
                     acc.add(std::abs(ia.value()));
                     ++ia;
                   } else if (ib && (!ia || ib.col() < ia.col())) {
                     acc.add(std::abs(ib.value()));
                     ++ib;
                   } else {
                     acc.add(std::abs(ia.value() - ib.value()));
                     ++ia;
                     ++ib;
                   }
                 }
               }
             },
             [](KahanSum& x, const KahanSum& y) { x.merge(y); })
      .value();
}

FlowMatrix scale_block(FlowMatrix m, BlockSel rows, BlockSel cols, double factor,
                       DiagonalMode mode) {
  check_factor(factor);
  if (rows.part) check_partition(m, *rows.part);
  if (cols.part) check_partition(m, *cols.part);
  transform_entries(m, [&](Eigen::Index i, Eigen::Index j, double& v) {
    if (rows.part && rows.part->block_of(i) != rows.block) return;
    if (cols.part && cols.part->block_of(j) != cols.block) return;
    if (mode == DiagonalMode::Only && i != j) return;
    if (mode == DiagonalMode::Exclude && i == j) return;
    v *= factor;
  });
  return m;
}

void apply_row_factors(FlowMatrix& m, const BlockPartition& p, const Eigen::VectorXd& f) {
  check_partition(m, p);
  check_factors(f, p);
  transform_entries(m, [&](Eigen::Index i, Eigen::Index, double& v) { v *= f[p.block_of(i)]; });
}

void apply_col_factors(FlowMatrix& m, const BlockPartition& p, const Eigen::VectorXd& f) {
  check_partition(m, p);
  check_factors(f, p);
  transform_entries(m, [&](Eigen::Index, Eigen::Index j, double& v) { v *= f[p.block_of(j)]; });
}

void apply_diag_offdiag_col_factors(FlowMatrix& m, const BlockPartition& p,
                                    const Eigen::VectorXd& diag_f,
                                    const Eigen::VectorXd& offdiag_f) {
  check_partition(m, p);
  check_factors(diag_f, p);
  check_factors(offdiag_f, p);
  transform_entries(m, [&](Eigen::Index i, Eigen::Index j, double& v) {
    v *= (i == j ? diag_f : offdiag_f)[p.block_of(j)];
  });
}

void apply_pair_factors(FlowMatrix& m, const BlockPartition& rows, const BlockPartition& cols,
                        const Eigen::MatrixXd& f) {
  check_partition(m, rows);
  check_partition(m, cols);
  if (f.rows() != rows.block_count || f.cols() != cols.block_count)
    fail(ErrorCode::LengthMismatch, "pair factor table shape mismatch");
  for (Eigen::Index r = 0; r < f.rows(); ++r)
    for (Eigen::Index c = 0; c < f.cols(); ++c) check_factor(f(r, c));
  transform_entries(m, [&](Eigen::Index i, Eigen::Index j, double& v) {
    v *= f(rows.block_of(i), cols.block_of(j));
  });
}

}  // namespace migrate
