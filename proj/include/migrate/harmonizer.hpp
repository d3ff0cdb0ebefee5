#pragma once

#include <string>
#include <utility>
#include <vector>

#include "migrate/constraints.hpp"
#include "migrate/flow_matrix.hpp"
#include "migrate/geo.hpp"
#include "migrate/population_path.hpp"

namespace migrate {

// A block left unscaled by a stage, with the target/source pair that forced
// the decision.  Entries are never scaled to zero, and mass that does not
// exist cannot be scaled up, so a zero on either side means "leave alone and
// report".
struct SkippedBlock {
  std::string stage;
  std::string block;
  double target = 0.0;
  double source = 0.0;
};

struct IpfReport {
  int iterations = 0;
  bool converged = false;
  std::vector<double> l1_trace;      // L1 change per iteration
  double max_row_violation = 0.0;    // relative, over blocks with usable targets
  double max_col_violation = 0.0;
  std::vector<SkippedBlock> skipped;
};

struct HarmonizeReport {
  std::vector<SkippedBlock> skipped;  // one-shot stages
  IpfReport ipf;
};

struct HarmonizeOptions {
  bool cbg_stage = true;
  bool state_margin_stage = true;
  bool state_flow_stage = true;
  bool county_ipf_stage = true;
  int ipf_max_iterations = 6000;
  // Absolute L1 tolerance on successive iterates; <= 0 derives
  // 1e-6 * total mass at entry.
  double ipf_tolerance = -1.0;
};

// Stage 1: each row is scaled so its sum matches the CBG's smoothed
// population for year(m) - 1 (the ACS question asks where people lived a year
// ago, so row mass belongs to the prior year).  Rows with zero mass or zero
// target are reported and left alone.
FlowMatrix scale_to_cbg_populations(FlowMatrix m, const PopulationPaths& paths,
                                    const GeoHierarchy& h, HarmonizeReport* report = nullptr);

// Stage 2: per state, diagonal entries are scaled to the stayer count and
// off-diagonal entries into the state to (population - stayers).
FlowMatrix scale_state_stayers_movers(FlowMatrix m, const ConstraintSet& c,
                                      const GeoHierarchy& h, HarmonizeReport* report = nullptr);

// Stage 3: each state-pair block with a recorded flow is scaled to it.
// Pairs without flow data keep their relative mass.
FlowMatrix scale_state_flows(FlowMatrix m, const ConstraintSet& c, const GeoHierarchy& h,
                             HarmonizeReport* report = nullptr);

// Stage 4: iterative proportional fitting on county blocks.  Odd iterations
// scale each county's incoming columns to the current-year population, even
// iterations scale outgoing rows to the prior-year population.  Stops once
// two consecutive L1 changes fall under the tolerance, or after
// max_iterations.  Totals of the two target vectors must agree within 1e-6
// relative (prev is rescaled onto curr's total); larger gaps are an error.
std::pair<FlowMatrix, IpfReport> ipf_to_county_pops(FlowMatrix m, const Eigen::VectorXd& prev,
                                                    const Eigen::VectorXd& curr,
                                                    const BlockPartition& counties,
                                                    int max_iterations = 6000,
                                                    double tolerance = -1.0);

// All four stages in order.  The one-shot stages run exactly once before the
// IPF; rerunning them between IPF iterations would fight the county fit.
std::pair<FlowMatrix, HarmonizeReport> harmonize(FlowMatrix m, const ConstraintSet& c,
                                                 const PopulationPaths& paths,
                                                 const GeoHierarchy& h,
                                                 const HarmonizeOptions& options = {});

}  // namespace migrate
