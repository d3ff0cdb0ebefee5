#include "migrate/harmonizer.hpp"

#include <cmath>
#include <string>

namespace migrate {

namespace {

// target / source when both are positive, else 1.0 with a report entry.
double safe_factor(double target, double source, const std::string& stage,
                   const std::string& block, std::vector<SkippedBlock>* skipped) {
  if (target > 0.0 && source > 0.0) return target / source;
  if (skipped) skipped->push_back({stage, block, target, source});
  return 1.0;
}

}  // namespace

FlowMatrix scale_to_cbg_populations(FlowMatrix m, const PopulationPaths& paths,
                                    const GeoHierarchy& h, HarmonizeReport* report) {
  if (paths.cbg_count() != m.dim())
    fail(ErrorCode::LengthMismatch, "population paths cover " +
                                        std::to_string(paths.cbg_count()) + " cbgs, matrix has " +
                                        std::to_string(m.dim()));
  const int target_year = m.year() - 1;
  Eigen::VectorXd sums = m.row_sums();
  Eigen::VectorXd f(m.dim());
  std::vector<SkippedBlock> local;
  for (Eigen::Index i = 0; i < m.dim(); ++i)
    f[i] = safe_factor(paths.value(i, target_year), sums[i], "cbg_rows",
                       h.cbg_ids()[static_cast<std::size_t>(i)], &local);
  transform_entries(m, [&](Eigen::Index i, Eigen::Index, double& v) { v *= f[i]; });
  if (report)
    report->skipped.insert(report->skipped.end(), local.begin(), local.end());
  return m;
}

FlowMatrix scale_state_stayers_movers(FlowMatrix m, const ConstraintSet& c,
                                      const GeoHierarchy& h, HarmonizeReport* report) {
  check_constraint_dims(c, h);
  BlockPartition states = h.partition(GeoLevel::State);
  DiagOffdiagSums sums = split_diag_offdiag(m, states);
  Eigen::VectorXd diag_f(states.block_count), offdiag_f(states.block_count);
  std::vector<SkippedBlock> local;
  for (int s = 0; s < states.block_count; ++s) {
    const std::string& id = h.state_ids()[static_cast<std::size_t>(s)];
    diag_f[s] = safe_factor(c.state_stayers[s], sums.diag[s], "state_stayers", id, &local);
    double movers = c.state_pops[s] - c.state_stayers[s];
    offdiag_f[s] = safe_factor(movers, sums.offdiag[s], "state_movers", id, &local);
  }
  apply_diag_offdiag_col_factors(m, states, diag_f, offdiag_f);
  if (report) report->skipped.insert(report->skipped.end(), local.begin(), local.end());
  return m;
}

FlowMatrix scale_state_flows(FlowMatrix m, const ConstraintSet& c, const GeoHierarchy& h,
                             HarmonizeReport* report) {
  check_constraint_dims(c, h);
  BlockPartition states = h.partition(GeoLevel::State);
  Eigen::MatrixXd sums = block_sum(m, states, states);
  Eigen::MatrixXd f(states.block_count, states.block_count);
  std::vector<SkippedBlock> local;
  for (int r = 0; r < states.block_count; ++r)
    for (int s = 0; s < states.block_count; ++s) {
      double target = c.state_flows(r, s);
      if (target == 0.0) {
        // No recorded flow is missing data, not a demand for emptiness.
        f(r, s) = 1.0;
        continue;
      }
      f(r, s) = safe_factor(target, sums(r, s), "state_flows",
                            h.state_ids()[static_cast<std::size_t>(r)] + ">" +
                                h.state_ids()[static_cast<std::size_t>(s)],
                            &local);
    }
  apply_pair_factors(m, states, states, f);
  if (report) report->skipped.insert(report->skipped.end(), local.begin(), local.end());
  return m;
}

std::pair<FlowMatrix, IpfReport> ipf_to_county_pops(FlowMatrix m, const Eigen::VectorXd& prev,
                                                    const Eigen::VectorXd& curr,
                                                    const BlockPartition& counties,
                                                    int max_iterations, double tolerance) {
  check_partition(m, counties);
  if (prev.size() != counties.block_count || curr.size() != counties.block_count)
    fail(ErrorCode::LengthMismatch, "county targets do not match partition");
  if (!prev.allFinite() || !curr.allFinite() || prev.minCoeff() < 0.0 || curr.minCoeff() < 0.0)
    fail(ErrorCode::NonFiniteInput, "county targets must be finite and non-negative");

  IpfReport report;

  // Row and column targets must describe the same total mass; tiny gaps are
  // measurement noise and folded into the row targets.
  double prev_total = prev.sum();
  double curr_total = curr.sum();
  if (curr_total <= 0.0 || prev_total <= 0.0)
    fail(ErrorCode::ZeroTotal, "county targets sum to zero");
  double gap = std::abs(prev_total - curr_total) / curr_total;
  if (gap > 1e-6)
    fail(ErrorCode::InconsistentMarginals,
         "county target totals differ by " + std::to_string(gap) + " relative");
  Eigen::VectorXd row_target = prev * (curr_total / prev_total);
  const Eigen::VectorXd& col_target = curr;

  if (tolerance <= 0.0) tolerance = 1e-6 * m.total();

  // Blocks where fitting is impossible are frozen up front: scaling keeps
  // signs, so a block with zero mass or a zero target never changes state.
  Eigen::VectorXd row_mass = block_row_sums(m, counties);
  Eigen::VectorXd col_mass = block_col_sums(m, counties);
  std::vector<bool> row_ok(static_cast<std::size_t>(counties.block_count));
  std::vector<bool> col_ok(static_cast<std::size_t>(counties.block_count));
  for (int b = 0; b < counties.block_count; ++b) {
    row_ok[static_cast<std::size_t>(b)] = row_target[b] > 0.0 && row_mass[b] > 0.0;
    col_ok[static_cast<std::size_t>(b)] = col_target[b] > 0.0 && col_mass[b] > 0.0;
    if (!row_ok[static_cast<std::size_t>(b)] && (row_target[b] > 0.0 || row_mass[b] > 0.0))
      report.skipped.push_back({"ipf_rows", std::to_string(b), row_target[b], row_mass[b]});
    if (!col_ok[static_cast<std::size_t>(b)] && (col_target[b] > 0.0 || col_mass[b] > 0.0))
      report.skipped.push_back({"ipf_cols", std::to_string(b), col_target[b], col_mass[b]});
  }

  SparseRowMatrix& s = m.storage();
  Eigen::VectorXd f(counties.block_count);
  for (int iter = 1; iter <= max_iterations; ++iter) {
    bool col_pass = (iter % 2) == 1;
    if (col_pass) {
      col_mass = block_col_sums(m, counties);
      for (int b = 0; b < counties.block_count; ++b)
        f[b] = col_ok[static_cast<std::size_t>(b)] ? col_target[b] / col_mass[b] : 1.0;
    } else {
      row_mass = block_row_sums(m, counties);
      for (int b = 0; b < counties.block_count; ++b)
        f[b] = row_ok[static_cast<std::size_t>(b)] ? row_target[b] / row_mass[b] : 1.0;
    }
    // Apply the pass and measure the L1 move in one sweep.
    double l1 =
        chunked_reduce<KahanSum>(
            m.dim(), [] { return KahanSum{}; },
            [&](KahanSum& acc, Eigen::Index begin, Eigen::Index end) {
              for (Eigen::Index i = begin; i < end; ++i) {
                double row_f = col_pass ? 1.0 : f[counties.block_of(i)];
                for (SparseRowMatrix::InnerIterator it(s, i); it; ++it) {
                  double factor = col_pass ? f[counties.block_of(it.col())] : row_f;
                  double before = it.valueRef();
                  double after = before * factor;
                  it.valueRef() = after;
                  acc.add(std::abs(after - before));
                }
              }
            },
            [](KahanSum& a, const KahanSum& b) { a.merge(b); })
            .value();
    report.l1_trace.push_back(l1);
    report.iterations = iter;
    std::size_t k = report.l1_trace.size();
    if (k >= 2 && report.l1_trace[k - 1] < tolerance && report.l1_trace[k - 2] < tolerance) {
      report.converged = true;
      break;
    }
  }

  row_mass = block_row_sums(m, counties);
  col_mass = block_col_sums(m, counties);
  for (int b = 0; b < counties.block_count; ++b) {
    if (row_ok[static_cast<std::size_t>(b)])
      report.max_row_violation = std::max(
          report.max_row_violation, std::abs(row_mass[b] - row_target[b]) / row_target[b]);
    if (col_ok[static_cast<std::size_t>(b)])
      report.max_col_violation = std::max(
          report.max_col_violation, std::abs(col_mass[b] - col_target[b]) / col_target[b]);
  }
  return {std::move(m), std::move(report)};
}

std::pair<FlowMatrix, HarmonizeReport> harmonize(FlowMatrix m, const ConstraintSet& c,
                                                 const PopulationPaths& paths,
                                                 const GeoHierarchy& h,
                                                 const HarmonizeOptions& options) {
  check_constraint_dims(c, h);
  HarmonizeReport report;
  if (options.cbg_stage) m = scale_to_cbg_populations(std::move(m), paths, h, &report);
  if (options.state_margin_stage) m = scale_state_stayers_movers(std::move(m), c, h, &report);
  if (options.state_flow_stage) m = scale_state_flows(std::move(m), c, h, &report);
  if (options.county_ipf_stage) {
    auto [fitted, ipf] =
        ipf_to_county_pops(std::move(m), c.county_pops_prev, c.county_pops_curr,
                           h.partition(GeoLevel::County), options.ipf_max_iterations,
                           options.ipf_tolerance);
    m = std::move(fitted);
    report.ipf = std::move(ipf);
  }
  return {std::move(m), std::move(report)};
}

}  // namespace migrate
