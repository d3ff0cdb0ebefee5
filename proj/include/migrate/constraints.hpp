#pragma once

#include <array>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "migrate/error.hpp"
#include "migrate/geo.hpp"

namespace migrate {

// Census observation windows feeding the yearly population fit: the 2010
// decennial count followed by the ten 5-year rolling estimates ending
// 2010..2019.
inline constexpr int kObsWindows = 11;
inline constexpr int kPathFirstYear = 2009;
inline constexpr int kPathYears = 11;  // 2009..2019

const std::array<std::string_view, kObsWindows>& obs_window_names();
int obs_window_index(std::string_view name);  // -1 when unknown

// Births, deaths and international flows for one year, indexed by the
// hierarchy's county and state indices.
struct ComponentsOfChange {
  Eigen::VectorXd county_births, county_deaths, county_net_intl;
  Eigen::VectorXd state_births, state_deaths, state_net_intl, state_immigrants;
};

// Marginal targets for harmonizing one year's flow matrix.  Populations for
// the current year must be adjusted (natural increase and net international
// migration removed, exits folded into the diagonal) before use; `adjusted`
// tracks that and guards against doing it twice.
struct ConstraintSet {
  int year = 0;
  // Observed populations per CBG across the 11 windows (kObsWindows x n_cbg)
  // with matching margins of error.  Empty when yearly paths are supplied
  // directly.
  Eigen::MatrixXd cbg_obs_values;
  Eigen::MatrixXd cbg_obs_moe;
  Eigen::VectorXd state_pops;        // per state, year `year`
  Eigen::VectorXd state_stayers;     // per state, year `year`
  Eigen::MatrixXd state_flows;       // state x state, off-diagonal moves
  Eigen::VectorXd county_pops_prev;  // per county, year `year` - 1
  Eigen::VectorXd county_pops_curr;  // per county, year `year`
  bool adjusted = false;
};

void check_constraint_dims(const ConstraintSet& c, const GeoHierarchy& h);

struct AdjustedTargets {
  Eigen::VectorXd values;
  std::vector<Eigen::Index> clamped;  // areas where the adjustment went below zero
};

// raw - (births - deaths) - net_international, clamped at zero.
AdjustedTargets adjust_population_targets(const Eigen::VectorXd& raw,
                                          const Eigen::VectorXd& births,
                                          const Eigen::VectorXd& deaths,
                                          const Eigen::VectorXd& net_international);

// max(0, immigrants - net_international), i.e. the gross outflow implied by
// gross inflow and the net.
Eigen::VectorXd emigrants_per_state(const Eigen::VectorXd& immigrants,
                                    const Eigen::VectorXd& net_international);

// People who died or left the country during the year still occupy their
// origin cell on the diagonal, so stayer targets must absorb them.
void add_exits_to_diagonal(ConstraintSet& c, const Eigen::VectorXd& deaths,
                           const Eigen::VectorXd& emigrants);

// Full adjustment recipe for one year's targets.  Throws AlreadyAdjusted when
// applied twice.
ConstraintSet adjust_constraints(ConstraintSet c, const ComponentsOfChange& comp);

// (moe / 1.645) / estimate; the 90 percent margin maps back to one standard
// error.  estimate must be > 0.
double coefficient_of_variation(double estimate, double moe);

}  // namespace migrate
