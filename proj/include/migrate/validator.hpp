#pragma once

#include <optional>
#include <string>
#include <vector>

#include "migrate/flow_matrix.hpp"
#include "migrate/geo.hpp"

namespace migrate {

// Scales the whole matrix so its total matches a national population figure.
FlowMatrix national_rescale(FlowMatrix m, double national_total);

// Root mean squared error, optionally weighted: sqrt(sum w (e - t)^2 / sum w).
double rmse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth,
            const Eigen::VectorXd* weights = nullptr);

// Percent of raw RMSE removed: 100 * (1 - rmse_harmonized / rmse_raw).
// A perfect raw baseline has nothing to reduce; that is an error, not a 0.
double rmse_reduction(const Eigen::VectorXd& raw, const Eigen::VectorXd& harmonized,
                      const Eigen::VectorXd& truth, const Eigen::VectorXd* weights = nullptr);

// Pearson correlation, optionally weighted.  With `rank` set, values are
// replaced by midranks first (Spearman); ranks ignore the weights.
double correlation(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth,
                   const Eigen::VectorXd* weights = nullptr, bool rank = false);

// Percent error of an indicator aggregated over areas with population shares
// p: 100 * (sum_i p_i n_i - truth) / truth.
double demographic_bias(const Eigen::VectorXd& indicator, const Eigen::VectorXd& shares,
                        double truth);

// Arrivals into each block as a share of its incoming total (within-block
// flows excluded from the numerator).  Blocks with no incoming mass get NaN
// ("missing" downstream).
Eigen::VectorXd in_migration_rate(const FlowMatrix& m, const BlockPartition& p);

// Flattens a pair of matrices over one partition into aligned estimate/truth
// vectors, one element per block pair present in either matrix.  With
// movers_only, within-block pairs are left out.  Block pairs absent from both
// matrices stay out of the vectors, matching sparse evaluation at fine levels.
struct AlignedVectors {
  Eigen::VectorXd estimate;
  Eigen::VectorXd truth;
};
AlignedVectors vectorize_flows(const FlowMatrix& estimate, const FlowMatrix& truth,
                               const BlockPartition& p, bool movers_only);

// One row of the metric CSV (metric,level,weighted,year,value).  Slices like
// movers-only are part of the metric name ("pearson_movers").
struct MetricRow {
  std::string metric;
  std::string level;
  bool weighted = false;
  int year = 0;
  double value = 0.0;
};

}  // namespace migrate
