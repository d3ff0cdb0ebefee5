#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

#include <Eigen/Core>

namespace migrate {

// Number of worker threads.  MIGRATE_THREADS overrides hardware_concurrency;
// values < 1 are clamped to 1.
int worker_count();

// Compensated (Kahan) accumulator.  Reductions below always combine partial
// sums in a fixed order, so totals are bit-identical for any worker count.
struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double v) {
    double y = v - carry;
    double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }

  // Folds another accumulator in as two plain adds.  Only called in fixed
  // chunk order.
  void merge(const KahanSum& o) {
    add(o.sum);
    add(-o.carry);
  }

  double value() const { return sum; }
};

// Per-cell compensated accumulator over a fixed-size table.
struct KahanVector {
  Eigen::VectorXd sum, carry;

  explicit KahanVector(Eigen::Index n)
      : sum(Eigen::VectorXd::Zero(n)), carry(Eigen::VectorXd::Zero(n)) {}

  void add(Eigen::Index cell, double v) {
    double y = v - carry[cell];
    double t = sum[cell] + y;
    carry[cell] = (t - sum[cell]) - y;
    sum[cell] = t;
  }

  void merge(const KahanVector& o) {
    for (Eigen::Index i = 0; i < sum.size(); ++i) {
      add(i, o.sum[i]);
      add(i, -o.carry[i]);
    }
  }
};

namespace detail {

// Fixed chunk width for parallel row sweeps.  Small enough that desk-scale
// problems still split across workers; determinism needs the width to be
// independent of the worker count.
constexpr Eigen::Index kChunk = 32;

void run_chunks(Eigen::Index chunk_count, const std::function<void(Eigen::Index)>& body);

}  // namespace detail

// Runs body(begin, end) over [0, n) in fixed chunks, possibly in parallel.
// Chunks are disjoint, so the body may write to per-row state freely.
template <class Body>
void parallel_rows(Eigen::Index n, const Body& body) {
  if (n <= 0) return;
  Eigen::Index chunks = (n + detail::kChunk - 1) / detail::kChunk;
  detail::run_chunks(chunks, [&](Eigen::Index c) {
    Eigen::Index begin = c * detail::kChunk;
    Eigen::Index end = std::min(n, begin + detail::kChunk);
    body(begin, end);
  });
}

// Parallel reduction with deterministic combine order.  make() builds an
// empty partial, body(partial, begin, end) accumulates one chunk, and the
// partials are merged front to back.
template <class T, class Make, class Body, class Merge>
T chunked_reduce(Eigen::Index n, const Make& make, const Body& body, const Merge& merge) {
  T result = make();
  if (n <= 0) return result;
  Eigen::Index chunks = (n + detail::kChunk - 1) / detail::kChunk;
  std::vector<std::optional<T>> partials(static_cast<std::size_t>(chunks));
  detail::run_chunks(chunks, [&](Eigen::Index c) {
    T part = make();
    Eigen::Index begin = c * detail::kChunk;
    Eigen::Index end = std::min(n, begin + detail::kChunk);
    body(part, begin, end);
    partials[static_cast<std::size_t>(c)] = std::move(part);
  });
  for (auto& p : partials) merge(result, *p);
  return result;
}

}  // namespace migrate
