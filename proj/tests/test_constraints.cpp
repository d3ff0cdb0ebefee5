#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "migrate/constraints.hpp"
#include "migrate/geo.hpp"

using namespace migrate;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

GeoHierarchy two_state_world() {
  return GeoHierarchy::build({
      {"B1", "T1", "C1", "S1", 0, 0},
      {"B2", "T1", "C1", "S1", 0, 0},
      {"B3", "T2", "C2", "S2", 0, 0},
  });
}

ConstraintSet base_set(const GeoHierarchy& h) {
  ConstraintSet c;
  c.year = 2015;
  c.state_pops = vec({1000, 2000});
  c.state_stayers = vec({900, 1800});
  c.state_flows = Eigen::MatrixXd::Zero(2, 2);
  c.state_flows << 950, 50, 100, 1900;
  c.county_pops_prev = vec({980, 1950});
  c.county_pops_curr = vec({1000, 2000});
  (void)h;
  return c;
}

ComponentsOfChange components(const GeoHierarchy& h) {
  ComponentsOfChange comp;
  comp.county_births = vec({10, 20});
  comp.county_deaths = vec({5, 8});
  comp.county_net_intl = vec({20, -4});
  comp.state_births = vec({10, 20});
  comp.state_deaths = vec({5, 8});
  comp.state_net_intl = vec({20, -4});
  comp.state_immigrants = vec({100, 30});
  (void)h;
  return comp;
}

}  // namespace

TEST_CASE("observation windows are the 2010 count plus ten rolling windows") {
  const auto& names = obs_window_names();
  CHECK(names.size() == 11);
  CHECK(names[0] == "census2010");
  CHECK(names[1] == "acs2006_2010");
  CHECK(names[10] == "acs2015_2019");
  CHECK(obs_window_index("census2010") == 0);
  CHECK(obs_window_index("acs2011_2015") == 6);
  CHECK(obs_window_index("nope") == -1);
}

TEST_CASE("population adjustment follows the removal rule") {
  AdjustedTargets t = adjust_population_targets(vec({1000}), vec({10}), vec({5}), vec({20}));
  CHECK(t.values[0] == 975);
  CHECK(t.clamped.empty());
}

TEST_CASE("zero components leave targets unchanged") {
  AdjustedTargets t = adjust_population_targets(vec({123, 456}), vec({0, 0}), vec({0, 0}),
                                                vec({0, 0}));
  CHECK(t.values[0] == 123);
  CHECK(t.values[1] == 456);
  CHECK(t.clamped.empty());
}

TEST_CASE("adjustment clamps at zero and reports the area") {
  AdjustedTargets t = adjust_population_targets(vec({10, 100}), vec({60, 0}), vec({10, 0}),
                                                vec({0, 0}));
  CHECK(t.values[0] == 0);
  CHECK(t.values[1] == 100);
  REQUIRE(t.clamped.size() == 1);
  CHECK(t.clamped[0] == 0);
}

TEST_CASE("emigrants are the clamped excess of immigrants over net") {
  Eigen::VectorXd e = emigrants_per_state(vec({100, 0, 30}), vec({60, 0, 50}));
  CHECK(e[0] == 40);
  CHECK(e[1] == 0);
  CHECK(e[2] == 0);  // clamped
}

TEST_CASE("exits are folded into stayers and the within-state flow") {
  GeoHierarchy h = two_state_world();
  ConstraintSet c = base_set(h);
  Eigen::MatrixXd flows_before = c.state_flows;
  Eigen::VectorXd stay_before = c.state_stayers;
  add_exits_to_diagonal(c, vec({5, 0}), vec({3, 0}));
  CHECK(c.state_stayers[0] == stay_before[0] + 8);
  CHECK(c.state_stayers[1] == stay_before[1]);
  CHECK(c.state_flows(0, 0) == flows_before(0, 0) + 8);
  CHECK(c.state_flows(0, 1) == flows_before(0, 1));
  CHECK(c.state_flows(1, 0) == flows_before(1, 0));
  CHECK(c.state_flows(1, 1) == flows_before(1, 1));
  // populations untouched
  CHECK(c.state_pops == base_set(h).state_pops);
}

TEST_CASE("full adjustment is consistent and refuses to run twice") {
  GeoHierarchy h = two_state_world();
  ConstraintSet raw = base_set(h);
  ComponentsOfChange comp = components(h);
  ConstraintSet adj = adjust_constraints(raw, comp);
  CHECK(adj.adjusted);

  // state pops: raw - natural increase - net intl
  for (int k = 0; k < 2; ++k) {
    double expect = raw.state_pops[k] - (comp.state_births[k] - comp.state_deaths[k]) -
                    comp.state_net_intl[k];
    CHECK(adj.state_pops[k] == expect);
    // accounting identity, pre-clamp: adjusted + natural increase + net = raw
    CHECK(adj.state_pops[k] + (comp.state_births[k] - comp.state_deaths[k]) +
              comp.state_net_intl[k] ==
          raw.state_pops[k]);
  }
  // county pops: current adjusted, prior year left raw
  for (int k = 0; k < 2; ++k) {
    double expect = raw.county_pops_curr[k] -
                    (comp.county_births[k] - comp.county_deaths[k]) - comp.county_net_intl[k];
    CHECK(adj.county_pops_curr[k] == expect);
    CHECK(adj.county_pops_prev[k] == raw.county_pops_prev[k]);
  }
  // exits: deaths + max(0, immigrants - net)
  Eigen::VectorXd emis = emigrants_per_state(comp.state_immigrants, comp.state_net_intl);
  for (int k = 0; k < 2; ++k) {
    CHECK(adj.state_stayers[k] == raw.state_stayers[k] + comp.state_deaths[k] + emis[k]);
    CHECK(adj.state_flows(k, k) == raw.state_flows(k, k) + comp.state_deaths[k] + emis[k]);
  }
  CHECK(adj.state_flows(0, 1) == raw.state_flows(0, 1));

  try {
    adjust_constraints(adj, comp);
    FAIL("expected AlreadyAdjusted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AlreadyAdjusted);
  }
}

TEST_CASE("constraint dimension check matches the hierarchy") {
  GeoHierarchy h = two_state_world();
  ConstraintSet c = base_set(h);
  CHECK_NOTHROW(check_constraint_dims(c, h));
  c.state_pops = vec({1.0});
  CHECK_THROWS_AS(check_constraint_dims(c, h), Error);
}

TEST_CASE("coefficient of variation uses the 90 percent z value") {
  CHECK(coefficient_of_variation(1000.0, 164.5) == doctest::Approx(0.10));
  CHECK(coefficient_of_variation(500.0, 0.0) == 0.0);
  try {
    coefficient_of_variation(0.0, 10.0);
    FAIL("expected ZeroEstimate");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroEstimate);
  }
}

TEST_CASE("synthetic cbg table lands near the reported cv scale") {
  // values ~1200 persons with ~310 MOE give CV about 15.7 percent, the scale
  // reported for ACS CBG populations
  double cv = coefficient_of_variation(1200.0, 311.0);
  CHECK(cv > 0.14);
  CHECK(cv < 0.17);
}
