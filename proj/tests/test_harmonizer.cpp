#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "migrate/harmonizer.hpp"
#include "migrate/rng.hpp"

using namespace migrate;

namespace {

// 2 states x 2 counties x 1 tract x 2 cbgs = 8 cbgs, ids sorted as built.
GeoHierarchy two_state_hierarchy() {
  std::vector<CbgRecord> recs;
  for (std::string st : {"A", "B"})
    for (int c = 1; c <= 2; ++c)
      for (int b = 1; b <= 2; ++b) {
        std::string county = st + std::to_string(c);
        recs.push_back({county + "T" + std::to_string(b), county + "T", county, st, 0.0, 0.0});
      }
  return GeoHierarchy::build(recs);
}

Eigen::MatrixXd random_dense(Eigen::Index n, std::uint64_t seed, double lo = 0.5, double hi = 3.0) {
  Rng rng(seed, "harmonizer_test");
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      d(i, j) = rng.uniform(static_cast<std::uint64_t>(i * n + j), lo, hi);
  return d;
}

// Classical dense IPF with the same alternation and the same row-target
// rescale, as an independent oracle.
Eigen::MatrixXd dense_ipf(Eigen::MatrixXd d, const BlockPartition& p, Eigen::VectorXd prev,
                          const Eigen::VectorXd& curr, int iterations) {
  prev *= curr.sum() / prev.sum();
  for (int iter = 1; iter <= iterations; ++iter) {
    bool col_pass = (iter % 2) == 1;
    Eigen::VectorXd mass = Eigen::VectorXd::Zero(p.block_count);
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      for (Eigen::Index j = 0; j < d.cols(); ++j)
        mass[p.block_of(col_pass ? j : i)] += d(i, j);
    const Eigen::VectorXd& target = col_pass ? curr : prev;
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      for (Eigen::Index j = 0; j < d.cols(); ++j) {
        int b = p.block_of(col_pass ? j : i);
        if (mass[b] > 0.0 && target[b] > 0.0) d(i, j) *= target[b] / mass[b];
      }
  }
  return d;
}

ConstraintSet positive_constraints(const GeoHierarchy& h) {
  ConstraintSet c;
  c.year = 2015;
  c.state_pops = Eigen::VectorXd::Constant(h.state_count(), 140.0);
  c.state_stayers = Eigen::VectorXd::Constant(h.state_count(), 100.0);
  c.state_flows = Eigen::MatrixXd::Constant(h.state_count(), h.state_count(), 20.0);
  c.county_pops_prev = Eigen::VectorXd::Constant(h.county_count(), 70.0);
  c.county_pops_curr = Eigen::VectorXd::Constant(h.county_count(), 70.0);
  c.adjusted = true;
  return c;
}

}  // namespace

TEST_CASE("already consistent county targets converge in two iterations") {
  GeoHierarchy h = two_state_hierarchy();
  FlowMatrix m = FlowMatrix::from_dense(random_dense(8, 1), 2015);
  BlockPartition counties = h.partition(GeoLevel::County);
  Eigen::VectorXd prev = block_row_sums(m, counties);
  Eigen::VectorXd curr = block_col_sums(m, counties);
  auto [out, report] = ipf_to_county_pops(m, prev, curr, counties);
  CHECK(report.converged);
  CHECK(report.iterations == 2);
  REQUIRE(report.l1_trace.size() == 2);
  CHECK(l1_distance(m, out) <= 1e-9 * m.total());
  CHECK(report.max_row_violation <= 1e-12);
  CHECK(report.max_col_violation <= 1e-12);
}

TEST_CASE("county fitting matches a dense reference at equal iteration counts") {
  GeoHierarchy h = two_state_hierarchy();
  BlockPartition counties = h.partition(GeoLevel::County);
  for (std::uint64_t seed = 10; seed < 14; ++seed) {
    Eigen::MatrixXd d = random_dense(8, seed);
    Rng rng(seed, "targets");
    Eigen::VectorXd prev(4), curr(4);
    for (int b = 0; b < 4; ++b) {
      prev[b] = rng.uniform(static_cast<std::uint64_t>(b), 20.0, 120.0);
      curr[b] = rng.uniform(static_cast<std::uint64_t>(b) + 10, 20.0, 120.0);
    }
    prev *= curr.sum() / prev.sum();
    auto [out, report] =
        ipf_to_county_pops(FlowMatrix::from_dense(d, 2015), prev, curr, counties, 9, 1e-300);
    Eigen::MatrixXd want = dense_ipf(d, counties, prev, curr, report.iterations);
    Eigen::MatrixXd got = out.dense();
    for (Eigen::Index i = 0; i < 8; ++i)
      for (Eigen::Index j = 0; j < 8; ++j)
        CHECK(std::abs(got(i, j) - want(i, j)) <= 1e-10 * std::max(1.0, std::abs(want(i, j))));
  }
}

TEST_CASE("uniform seed converges to the independent block table") {
  GeoHierarchy h = two_state_hierarchy();
  BlockPartition counties = h.partition(GeoLevel::County);
  FlowMatrix m = FlowMatrix::from_dense(Eigen::MatrixXd::Ones(8, 8), 2015);
  Eigen::VectorXd prev(4), curr(4);
  prev << 40, 80, 120, 160;
  curr << 100, 100, 100, 100;
  // equal totals by construction
  auto [out, report] = ipf_to_county_pops(m, prev, curr, counties, 6000, 1e-10);
  CHECK(report.converged);
  Eigen::MatrixXd cell = block_sum(out, counties, counties);
  double total = curr.sum();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      double want = prev[r] * curr[c] / total;
      CHECK(cell(r, c) == doctest::Approx(want).epsilon(1e-8));
    }
  // within a block every entry carries the same value
  Eigen::MatrixXd d = out.dense();
  CHECK(std::abs(d(0, 2) - d(1, 3)) <= 1e-12 * d(0, 2));
}

TEST_CASE("county target totals must agree") {
  GeoHierarchy h = two_state_hierarchy();
  BlockPartition counties = h.partition(GeoLevel::County);
  FlowMatrix m = FlowMatrix::from_dense(random_dense(8, 2), 2015);
  Eigen::VectorXd prev = Eigen::VectorXd::Constant(4, 50.0);
  Eigen::VectorXd curr = prev;
  curr[0] += 2.0;  // 1 percent gap
  try {
    ipf_to_county_pops(m, prev, curr, counties);
    FAIL("expected a total mismatch error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InconsistentMarginals);
  }

  // a sub-tolerance gap is folded into the row targets instead
  Eigen::VectorXd close = prev * (1.0 + 5e-7);
  auto [out, report] = ipf_to_county_pops(m, close, prev, counties, 6000, 1e-10);
  CHECK(report.converged);
  Eigen::VectorXd rows = block_row_sums(out, counties);
  for (int b = 0; b < 4; ++b) CHECK(rows[b] == doctest::Approx(50.0).epsilon(1e-8));
}

TEST_CASE("dead county blocks are frozen and reported once") {
  GeoHierarchy h = two_state_hierarchy();
  BlockPartition counties = h.partition(GeoLevel::County);
  Eigen::MatrixXd d = random_dense(8, 3);
  d.row(4).setZero();
  d.row(5).setZero();
  d.col(4).setZero();
  d.col(5).setZero();  // county 2 (cbgs 4,5) carries no mass
  FlowMatrix m = FlowMatrix::from_dense(d, 2015);
  Eigen::VectorXd prev(4), curr(4);
  prev << 60, 60, 30, 60;
  curr << 70, 50, 30, 60;
  auto [out, report] = ipf_to_county_pops(m, prev, curr, counties, 6000, 1e-10);
  CHECK(report.converged);
  REQUIRE(report.skipped.size() == 2);
  CHECK(report.skipped[0].stage == "ipf_rows");
  CHECK(report.skipped[1].stage == "ipf_cols");
  CHECK(report.skipped[0].block == "2");
  CHECK(report.skipped[0].target == 30.0);
  CHECK(report.skipped[0].source == 0.0);
  // the dead block stays dead, live blocks are fitted
  Eigen::MatrixXd od = out.dense();
  CHECK(od.row(4).cwiseAbs().sum() == 0.0);
  CHECK(od.col(5).cwiseAbs().sum() == 0.0);
  Eigen::VectorXd cols = block_col_sums(out, counties);
  CHECK(cols[0] == doctest::Approx(70.0).epsilon(1e-8));
  CHECK(cols[3] == doctest::Approx(60.0).epsilon(1e-8));
}

TEST_CASE("a block empty on both sides is silent") {
  std::vector<CbgRecord> recs = {{"X1a", "X1t", "X1", "X", 0, 0},
                                 {"X1b", "X1t", "X1", "X", 0, 0},
                                 {"X2a", "X2t", "X2", "X", 0, 0},
                                 {"X2b", "X2t", "X2", "X", 0, 0}};
  GeoHierarchy h = GeoHierarchy::build(recs);
  BlockPartition counties = h.partition(GeoLevel::County);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(4, 4);
  d.topLeftCorner(2, 2) = random_dense(2, 4);
  Eigen::VectorXd prev(2), curr(2);
  double mass = d.sum();
  prev << mass, 0.0;
  curr << mass, 0.0;
  auto [out, report] = ipf_to_county_pops(FlowMatrix::from_dense(d, 2015), prev, curr, counties);
  CHECK(report.skipped.empty());
  CHECK(report.converged);
}

TEST_CASE("county target validation") {
  GeoHierarchy h = two_state_hierarchy();
  BlockPartition counties = h.partition(GeoLevel::County);
  FlowMatrix m = FlowMatrix::from_dense(random_dense(8, 5), 2015);
  Eigen::VectorXd good = Eigen::VectorXd::Constant(4, 10.0);
  Eigen::VectorXd neg = good;
  neg[1] = -1.0;
  CHECK_THROWS_AS(ipf_to_county_pops(m, neg, good, counties), Error);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
  try {
    ipf_to_county_pops(m, zero, zero, counties);
    FAIL("expected zero-total error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroTotal);
  }
  Eigen::VectorXd shorter = Eigen::VectorXd::Constant(3, 10.0);
  CHECK_THROWS_AS(ipf_to_county_pops(m, shorter, good, counties), Error);
}

TEST_CASE("rows are scaled to the prior year populations") {
  GeoHierarchy h = two_state_hierarchy();
  Eigen::MatrixXd d = random_dense(8, 6);
  d.row(3).setZero();  // no observed flow out of cbg 3
  FlowMatrix m = FlowMatrix::from_dense(d, 2015);
  Eigen::MatrixXd values = Eigen::MatrixXd::Constant(8, kPathYears, 50.0);
  for (int i = 0; i < 8; ++i) values(i, 2014 - kPathFirstYear) = 10.0 * (i + 1);
  values(5, 2014 - kPathFirstYear) = 0.0;  // no population target for cbg 5
  PopulationPaths paths = PopulationPaths::from_values(values);
  HarmonizeReport report;
  FlowMatrix out = scale_to_cbg_populations(m, paths, h, &report);
  Eigen::VectorXd sums = out.row_sums();
  for (int i = 0; i < 8; ++i) {
    if (i == 3 || i == 5) continue;
    CHECK(sums[i] == doctest::Approx(10.0 * (i + 1)).epsilon(1e-12));
  }
  // both degenerate rows stay bit-identical
  for (int j = 0; j < 8; ++j) {
    CHECK(out.at(3, j) == m.at(3, j));
    CHECK(out.at(5, j) == m.at(5, j));
  }
  REQUIRE(report.skipped.size() == 2);
  CHECK(report.skipped[0].stage == "cbg_rows");
  CHECK(report.skipped[0].block == h.cbg_ids()[3]);
  CHECK(report.skipped[0].target == 40.0);
  CHECK(report.skipped[0].source == 0.0);
  CHECK(report.skipped[1].block == h.cbg_ids()[5]);
  CHECK(report.skipped[1].target == 0.0);
}

TEST_CASE("state stayers and movers are scaled separately by column state") {
  GeoHierarchy h = two_state_hierarchy();
  std::vector<Eigen::Triplet<double>> t = {
      {0, 0, 30.0}, {1, 1, 50.0},             // state A diagonal: 80
      {4, 1, 10.0}, {2, 0, 20.0},             // movers into A: 30
      {0, 4, 5.0},  {1, 6, 5.0},              // movers into B: 10
  };
  FlowMatrix m = FlowMatrix::from_triplets(8, 2015, t);
  ConstraintSet c = positive_constraints(h);
  c.state_pops << 100.0, 29.0;
  c.state_stayers << 40.0, 9.0;
  HarmonizeReport report;
  FlowMatrix out = scale_state_stayers_movers(m, c, h, &report);
  BlockPartition states = h.partition(GeoLevel::State);
  DiagOffdiagSums sums = split_diag_offdiag(out, states);
  CHECK(sums.diag[0] == doctest::Approx(40.0).epsilon(1e-12));
  CHECK(sums.offdiag[0] == doctest::Approx(60.0).epsilon(1e-12));
  CHECK(sums.offdiag[1] == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(out.at(0, 0) == 15.0);  // 30 * 40/80
  CHECK(out.at(2, 0) == 40.0);  // 20 * 60/30
  CHECK(out.at(0, 4) == 10.0);  // 5 * 20/10
  // state B has no diagonal mass to scale to its 9 stayers
  REQUIRE(report.skipped.size() == 1);
  CHECK(report.skipped[0].stage == "state_stayers");
  CHECK(report.skipped[0].block == "B");
  CHECK(report.skipped[0].target == 9.0);
  CHECK(report.skipped[0].source == 0.0);
}

TEST_CASE("state pair blocks are scaled to recorded flows including diagonals") {
  GeoHierarchy h = two_state_hierarchy();
  std::vector<Eigen::Triplet<double>> t = {
      {0, 0, 10.0}, {0, 1, 10.0},  // block A>A: 20, includes a diagonal cell
      {1, 5, 25.0},                // block A>B
      {5, 1, 40.0},                // block B>A
  };
  FlowMatrix m = FlowMatrix::from_triplets(8, 2015, t);
  ConstraintSet c = positive_constraints(h);
  c.state_flows << 10.0, 50.0,  // A>A scaled down, A>B scaled up
      0.0, 20.0;                // B>A has no data, B>B demands mass that is not there
  HarmonizeReport report;
  FlowMatrix out = scale_state_flows(m, c, h, &report);
  BlockPartition states = h.partition(GeoLevel::State);
  Eigen::MatrixXd cell = block_sum(out, states, states);
  CHECK(cell(0, 0) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(cell(0, 1) == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(out.at(0, 0) == 5.0);    // the diagonal scales with its block
  CHECK(out.at(5, 1) == 40.0);   // zero recorded flow leaves the block bit-identical
  REQUIRE(report.skipped.size() == 1);
  CHECK(report.skipped[0].stage == "state_flows");
  CHECK(report.skipped[0].block == "B>B");
  CHECK(report.skipped[0].target == 20.0);
  CHECK(report.skipped[0].source == 0.0);
}

TEST_CASE("harmonize equals the stage functions applied in order") {
  GeoHierarchy h = two_state_hierarchy();
  FlowMatrix m = FlowMatrix::from_dense(random_dense(8, 7), 2015);
  ConstraintSet c = positive_constraints(h);
  c.state_flows << 180.0, 30.0, 40.0, 160.0;
  c.county_pops_prev << 100, 80, 60, 40;
  c.county_pops_curr << 90, 90, 50, 50;
  Eigen::MatrixXd values = Eigen::MatrixXd::Constant(8, kPathYears, 60.0);
  PopulationPaths paths = PopulationPaths::from_values(values);

  auto [got, report] = harmonize(m, c, paths, h);

  FlowMatrix want = scale_to_cbg_populations(m, paths, h, nullptr);
  want = scale_state_stayers_movers(std::move(want), c, h, nullptr);
  want = scale_state_flows(std::move(want), c, h, nullptr);
  auto [fitted, ipf] = ipf_to_county_pops(std::move(want), c.county_pops_prev, c.county_pops_curr,
                                          h.partition(GeoLevel::County));
  CHECK((got.dense().array() == fitted.dense().array()).all());
  CHECK(report.ipf.iterations == ipf.iterations);
  CHECK(report.ipf.converged);

  // county columns hit their targets, rows their rescaled prior-year targets
  BlockPartition counties = h.partition(GeoLevel::County);
  Eigen::VectorXd cols = block_col_sums(got, counties);
  Eigen::VectorXd rows = block_row_sums(got, counties);
  double rescale = c.county_pops_curr.sum() / c.county_pops_prev.sum();
  for (int b = 0; b < 4; ++b) {
    CHECK(cols[b] == doctest::Approx(c.county_pops_curr[b]).epsilon(1e-6));
    CHECK(rows[b] == doctest::Approx(c.county_pops_prev[b] * rescale).epsilon(1e-6));
  }
}

TEST_CASE("disabling every stage returns the input untouched") {
  GeoHierarchy h = two_state_hierarchy();
  FlowMatrix m = FlowMatrix::from_dense(random_dense(8, 8), 2015);
  ConstraintSet c = positive_constraints(h);
  PopulationPaths paths = PopulationPaths::from_values(Eigen::MatrixXd::Constant(8, kPathYears, 1.0));
  HarmonizeOptions off;
  off.cbg_stage = off.state_margin_stage = off.state_flow_stage = off.county_ipf_stage = false;
  auto [out, report] = harmonize(m, c, paths, h, off);
  CHECK((out.dense().array() == m.dense().array()).all());
  CHECK(report.skipped.empty());
  CHECK(report.ipf.iterations == 0);
}

TEST_CASE("harmonize preserves the sparsity pattern and signs") {
  GeoHierarchy h = two_state_hierarchy();
  Eigen::MatrixXd d = random_dense(8, 9);
  // knock out a third of the entries
  Rng rng(9, "mask");
  for (Eigen::Index i = 0; i < 8; ++i)
    for (Eigen::Index j = 0; j < 8; ++j)
      if (rng.uniform(static_cast<std::uint64_t>(i * 8 + j)) < 0.33) d(i, j) = 0.0;
  FlowMatrix m = FlowMatrix::from_dense(d, 2015);
  ConstraintSet c = positive_constraints(h);
  PopulationPaths paths = PopulationPaths::from_values(Eigen::MatrixXd::Constant(8, kPathYears, 25.0));
  auto [out, report] = harmonize(m, c, paths, h);
  CHECK(out.nonzeros() == m.nonzeros());
  Eigen::MatrixXd od = out.dense();
  for (Eigen::Index i = 0; i < 8; ++i)
    for (Eigen::Index j = 0; j < 8; ++j) {
      if (d(i, j) == 0.0)
        CHECK(od(i, j) == 0.0);
      else
        CHECK(od(i, j) > 0.0);
      CHECK(std::isfinite(od(i, j)));
    }
}

TEST_CASE("refitting the county stage on its own output is a fixed point") {
  GeoHierarchy h = two_state_hierarchy();
  BlockPartition counties = h.partition(GeoLevel::County);
  FlowMatrix m = FlowMatrix::from_dense(random_dense(8, 11), 2015);
  Eigen::VectorXd prev(4), curr(4);
  prev << 100, 80, 60, 40;
  curr << 90, 90, 50, 50;
  auto [fitted, r1] = ipf_to_county_pops(m, prev, curr, counties, 6000, 1e-9);
  CHECK(r1.converged);
  auto [refit, r2] = ipf_to_county_pops(fitted, prev, curr, counties, 6000, 1e-9);
  CHECK(r2.converged);
  CHECK(r2.iterations <= 2);
  CHECK(l1_distance(fitted, refit) <= 1e-9 * fitted.total());
}

TEST_CASE("the iteration trace settles downward on positive seeds") {
  GeoHierarchy h = two_state_hierarchy();
  BlockPartition counties = h.partition(GeoLevel::County);
  FlowMatrix m = FlowMatrix::from_dense(random_dense(8, 12), 2015);
  Eigen::VectorXd prev(4), curr(4);
  prev << 200, 50, 100, 25;
  curr << 25, 100, 50, 200;
  auto [out, report] = ipf_to_county_pops(m, prev, curr, counties, 6000, 1e-10);
  CHECK(report.converged);
  REQUIRE(report.l1_trace.size() >= 3);
  CHECK(report.l1_trace.back() < report.l1_trace.front());
}

TEST_CASE("constraint dimensions are checked before any stage runs") {
  GeoHierarchy h = two_state_hierarchy();
  FlowMatrix m = FlowMatrix::from_dense(random_dense(8, 13), 2015);
  ConstraintSet c = positive_constraints(h);
  c.state_pops = Eigen::VectorXd::Constant(3, 10.0);
  PopulationPaths paths = PopulationPaths::from_values(Eigen::MatrixXd::Constant(8, kPathYears, 1.0));
  try {
    harmonize(m, c, paths, h);
    FAIL("expected a dimension error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
}
