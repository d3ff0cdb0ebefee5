#include "migrate/validator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

namespace migrate {

namespace {

void check_same_length(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* what) {
  if (a.size() != b.size())
    fail(ErrorCode::LengthMismatch, std::string(what) + ": " + std::to_string(a.size()) +
                                        " vs " + std::to_string(b.size()));
}

// Weighted mean with the weight total; weights must be non-negative with
// positive sum.
double weighted_mean(const Eigen::VectorXd& v, const Eigen::VectorXd* w, double wsum) {
  if (!w) return v.sum() / static_cast<double>(v.size());
  return v.dot(*w) / wsum;
}

double weight_total(Eigen::Index n, const Eigen::VectorXd* w) {
  if (!w) return static_cast<double>(n);
  if (w->size() != n) fail(ErrorCode::LengthMismatch, "weight vector length");
  if (w->minCoeff() < 0.0) fail(ErrorCode::NegativeEntry, "negative weight");
  double s = w->sum();
  if (s <= 0.0) fail(ErrorCode::ZeroTotal, "weights sum to zero");
  return s;
}

// Midranks (average rank over ties), 1-based.
Eigen::VectorXd midranks(const Eigen::VectorXd& v) {
  Eigen::Index n = v.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return v[a] < v[b]; });
  Eigen::VectorXd ranks(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && v[order[static_cast<std::size_t>(j + 1)]] ==
                            v[order[static_cast<std::size_t>(i)]])
      ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) ranks[order[static_cast<std::size_t>(k)]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

FlowMatrix national_rescale(FlowMatrix m, double national_total) {
  if (!std::isfinite(national_total) || national_total <= 0.0)
    fail(ErrorCode::NonPositiveFactor, "national total " + std::to_string(national_total));
  double t = m.total();
  if (t <= 0.0) fail(ErrorCode::ZeroTotal, "matrix has no mass to rescale");
  double f = national_total / t;
  transform_entries(m, [&](Eigen::Index, Eigen::Index, double& v) { v *= f; });
  return m;
}

double rmse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth,
            const Eigen::VectorXd* weights) {
  check_same_length(estimate, truth, "rmse");
  if (estimate.size() == 0) fail(ErrorCode::LengthMismatch, "rmse of empty vectors");
  double wsum = weight_total(estimate.size(), weights);
  KahanSum acc;
  for (Eigen::Index i = 0; i < estimate.size(); ++i) {
    double d = estimate[i] - truth[i];
    acc.add((weights ? (*weights)[i] : 1.0) * d * d);
  }
  return std::sqrt(acc.value() / wsum);
}

double rmse_reduction(const Eigen::VectorXd& raw, const Eigen::VectorXd& harmonized,
                      const Eigen::VectorXd& truth, const Eigen::VectorXd* weights) {
  double raw_rmse = rmse(raw, truth, weights);
  if (raw_rmse == 0.0) fail(ErrorCode::RawPerfect, "raw estimate already matches the truth");
  return 100.0 * (1.0 - rmse(harmonized, truth, weights) / raw_rmse);
}

double correlation(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth,
                   const Eigen::VectorXd* weights, bool rank) {
  check_same_length(estimate, truth, "correlation");
  if (estimate.size() < 2) fail(ErrorCode::LengthMismatch, "correlation needs >= 2 points");
  if (rank) {
    // Ranks are a property of the orderings alone; weights only enter the
    // moment computation below.
    return correlation(midranks(estimate), midranks(truth), weights, false);
  }
  double wsum = weight_total(estimate.size(), weights);
  double me = weighted_mean(estimate, weights, wsum);
  double mt = weighted_mean(truth, weights, wsum);
  KahanSum cov, ve, vt;
  for (Eigen::Index i = 0; i < estimate.size(); ++i) {
    double w = weights ? (*weights)[i] : 1.0;
    double de = estimate[i] - me;
    double dt = truth[i] - mt;
    cov.add(w * de * dt);
    ve.add(w * de * de);
    vt.add(w * dt * dt);
  }
  if (ve.value() <= 0.0 || vt.value() <= 0.0)
    fail(ErrorCode::ZeroVariance, "correlation of a constant vector");
  return cov.value() / std::sqrt(ve.value() * vt.value());
}

double demographic_bias(const Eigen::VectorXd& indicator, const Eigen::VectorXd& shares,
                        double truth) {
  check_same_length(indicator, shares, "demographic_bias");
  if (truth == 0.0) fail(ErrorCode::ZeroTotal, "true indicator value is zero");
  KahanSum acc;
  for (Eigen::Index i = 0; i < indicator.size(); ++i) acc.add(shares[i] * indicator[i]);
  return 100.0 * (acc.value() - truth) / truth;
}

Eigen::VectorXd in_migration_rate(const FlowMatrix& m, const BlockPartition& p) {
  check_partition(m, p);
  Eigen::VectorXd incoming = block_col_sums(m, p);
  // Within-block mass per destination block, one sweep.
  Eigen::VectorXd within =
      chunked_reduce<Eigen::VectorXd>(
          m.dim(), [&] { return Eigen::VectorXd::Zero(p.block_count).eval(); },
          [&](Eigen::VectorXd& acc, Eigen::Index begin, Eigen::Index end) {
            const SparseRowMatrix& s = m.storage();
            for (Eigen::Index i = begin; i < end; ++i) {
              int bi = p.block_of(i);
              for (SparseRowMatrix::InnerIterator it(s, i); it; ++it)
                if (p.block_of(it.col()) == bi) acc[bi] += it.value();
            }
          },
          [](Eigen::VectorXd& a, const Eigen::VectorXd& b) { a += b; })
          .eval();
  Eigen::VectorXd out(p.block_count);
  for (int b = 0; b < p.block_count; ++b)
    out[b] = incoming[b] > 0.0 ? (incoming[b] - within[b]) / incoming[b]
                               : std::numeric_limits<double>::quiet_NaN();
  return out;
}

AlignedVectors vectorize_flows(const FlowMatrix& estimate, const FlowMatrix& truth,
                               const BlockPartition& p, bool movers_only) {
  if (estimate.dim() != truth.dim())
    fail(ErrorCode::DimensionMismatch, "estimate and truth matrices differ in size");
  check_partition(estimate, p);
  // Ordered map keyed by block pair: the union of both patterns, emitted in a
  // stable order.
  std::map<std::pair<int, int>, std::pair<double, double>> cells;
  for_each_entry(estimate, [&](Eigen::Index i, Eigen::Index j, double v) {
    int bi = p.block_of(i), bj = p.block_of(j);
    if (movers_only && bi == bj) return;
    cells[{bi, bj}].first += v;
  });
  for_each_entry(truth, [&](Eigen::Index i, Eigen::Index j, double v) {
    int bi = p.block_of(i), bj = p.block_of(j);
    if (movers_only && bi == bj) return;
    cells[{bi, bj}].second += v;
  });
  AlignedVectors out;
  out.estimate.resize(static_cast<Eigen::Index>(cells.size()));
  out.truth.resize(static_cast<Eigen::Index>(cells.size()));
  Eigen::Index k = 0;
  for (const auto& [key, pair] : cells) {
    out.estimate[k] = pair.first;
    out.truth[k] = pair.second;
    ++k;
  }
  return out;
}

}  // namespace migrate
