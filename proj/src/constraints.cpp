#include "migrate/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace migrate {

const std::array<std::string_view, kObsWindows>& obs_window_names() {
  static const std::array<std::string_view, kObsWindows> names = {
      "census2010",    "acs2006_2010", "acs2007_2011", "acs2008_2012",
      "acs2009_2013",  "acs2010_2014", "acs2011_2015", "acs2012_2016",
      "acs2013_2017",  "acs2014_2018", "acs2015_2019",
  };
  return names;
}

int obs_window_index(std::string_view name) {
  const auto& names = obs_window_names();
  for (int i = 0; i < kObsWindows; ++i)
    if (names[static_cast<std::size_t>(i)] == name) return i;
  return -1;
}

void check_constraint_dims(const ConstraintSet& c, const GeoHierarchy& h) {
  auto want = [&](Eigen::Index got, Eigen::Index expect, const char* what) {
    if (got != expect)
      fail(ErrorCode::LengthMismatch, std::string(what) + ": " + std::to_string(got) +
                                          " entries for " + std::to_string(expect) + " areas");
  };
  want(c.state_pops.size(), h.state_count(), "state populations");
  want(c.state_stayers.size(), h.state_count(), "state stayers");
  want(c.state_flows.rows(), h.state_count(), "state flow rows");
  want(c.state_flows.cols(), h.state_count(), "state flow cols");
  want(c.county_pops_prev.size(), h.county_count(), "county populations (prev)");
  want(c.county_pops_curr.size(), h.county_count(), "county populations (curr)");
  if (c.cbg_obs_values.size() > 0) {
    want(c.cbg_obs_values.rows(), kObsWindows, "observation windows");
    want(c.cbg_obs_values.cols(), h.cbg_count(), "cbg observations");
    want(c.cbg_obs_moe.rows(), kObsWindows, "observation moe windows");
    want(c.cbg_obs_moe.cols(), h.cbg_count(), "cbg observation moes");
  }
}

AdjustedTargets adjust_population_targets(const Eigen::VectorXd& raw,
                                          const Eigen::VectorXd& births,
                                          const Eigen::VectorXd& deaths,
                                          const Eigen::VectorXd& net_international) {
  Eigen::Index n = raw.size();
  if (births.size() != n || deaths.size() != n || net_international.size() != n)
    fail(ErrorCode::LengthMismatch, "component vectors do not match target vector");
  AdjustedTargets out;
  out.values.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double v = raw[i] - (births[i] - deaths[i]) - net_international[i];
    if (v < 0.0) {
      out.clamped.push_back(i);
      v = 0.0;
    }
    out.values[i] = v;
  }
  return out;
}

Eigen::VectorXd emigrants_per_state(const Eigen::VectorXd& immigrants,
                                    const Eigen::VectorXd& net_international) {
  if (immigrants.size() != net_international.size())
    fail(ErrorCode::LengthMismatch, "immigrants vs net international");
  return (immigrants - net_international).cwiseMax(0.0);
}

void add_exits_to_diagonal(ConstraintSet& c, const Eigen::VectorXd& deaths,
                           const Eigen::VectorXd& emigrants) {
  Eigen::Index n = c.state_stayers.size();
  if (deaths.size() != n || emigrants.size() != n)
    fail(ErrorCode::LengthMismatch, "exit vectors do not match state count");
  for (Eigen::Index k = 0; k < n; ++k) {
    double exits = deaths[k] + emigrants[k];
    c.state_stayers[k] += exits;
    c.state_flows(k, k) += exits;
  }
}

ConstraintSet adjust_constraints(ConstraintSet c, const ComponentsOfChange& comp) {
  if (c.adjusted) fail(ErrorCode::AlreadyAdjusted, "constraint set already adjusted");
  AdjustedTargets states = adjust_population_targets(c.state_pops, comp.state_births,
                                                     comp.state_deaths, comp.state_net_intl);
  AdjustedTargets counties = adjust_population_targets(
      c.county_pops_curr, comp.county_births, comp.county_deaths, comp.county_net_intl);
  c.state_pops = states.values;
  c.county_pops_curr = counties.values;
  Eigen::VectorXd emigrants = emigrants_per_state(comp.state_immigrants, comp.state_net_intl);
  add_exits_to_diagonal(c, comp.state_deaths, emigrants);
  c.adjusted = true;
  return c;
}

double coefficient_of_variation(double estimate, double moe) {
  if (!(estimate > 0.0)) fail(ErrorCode::ZeroEstimate, "estimate " + std::to_string(estimate));
  if (moe < 0.0) fail(ErrorCode::NegativeEntry, "margin of error " + std::to_string(moe));
  return (moe / 1.645) / estimate;
}

}  // namespace migrate
