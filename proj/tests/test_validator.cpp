#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "migrate/rng.hpp"
#include "migrate/validator.hpp"

using namespace migrate;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Counting form of midranks, independent of the sort-based implementation.
Eigen::VectorXd naive_midranks(const Eigen::VectorXd& v) {
  Eigen::VectorXd r(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    int less = 0, equal = 0;
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      if (v[j] < v[i]) ++less;
      if (v[j] == v[i]) ++equal;
    }
    r[i] = less + (equal + 1) / 2.0;
  }
  return r;
}

double naive_corr(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  double ws = w.sum();
  double mx = x.dot(w) / ws, my = y.dot(w) / ws;
  double cov = 0, vx = 0, vy = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    cov += w[i] * (x[i] - mx) * (y[i] - my);
    vx += w[i] * (x[i] - mx) * (x[i] - mx);
    vy += w[i] * (y[i] - my) * (y[i] - my);
  }
  return cov / std::sqrt(vx * vy);
}

}  // namespace

TEST_CASE("rmse hand values") {
  CHECK(rmse(vec({1, 2, 3}), vec({1, 2, 3})) == 0.0);
  CHECK(rmse(vec({3, 4}), vec({0, 0})) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-14));
  Eigen::VectorXd w = vec({1, 3});
  CHECK(rmse(vec({2, 0}), vec({0, 0}), &w) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("rmse validation") {
  CHECK_THROWS_AS(rmse(vec({1}), vec({1, 2})), Error);
  CHECK_THROWS_AS(rmse(Eigen::VectorXd(), Eigen::VectorXd()), Error);
  Eigen::VectorXd bad = vec({1, -1});
  CHECK_THROWS_AS(rmse(vec({1, 2}), vec({1, 2}), &bad), Error);
  Eigen::VectorXd zero = vec({0, 0});
  CHECK_THROWS_AS(rmse(vec({1, 2}), vec({1, 2}), &zero), Error);
}

TEST_CASE("rmse matches the direct formula on random data") {
  Rng rng(31, "rmse");
  for (int trial = 0; trial < 8; ++trial) {
    Rng tr = rng.keyed(static_cast<std::uint64_t>(trial));
    int n = 5 + static_cast<int>(tr.below(0, 20));
    Eigen::VectorXd e(n), t(n), w(n);
    for (int i = 0; i < n; ++i) {
      e[i] = tr.normal(static_cast<std::uint64_t>(3 * i)) * 10;
      t[i] = tr.normal(static_cast<std::uint64_t>(3 * i + 1)) * 10;
      w[i] = tr.uniform(static_cast<std::uint64_t>(3 * i + 2), 0.1, 5.0);
    }
    double direct = std::sqrt(((e - t).array().square() * w.array()).sum() / w.sum());
    CHECK(rmse(e, t, &w) == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("rmse reduction percent") {
  CHECK(rmse_reduction(vec({2, 2}), vec({1, 1}), vec({0, 0})) ==
        doctest::Approx(50.0).epsilon(1e-12));
  // harmonization can make things worse; the percent goes negative
  CHECK(rmse_reduction(vec({1, 1}), vec({3, 3}), vec({0, 0})) ==
        doctest::Approx(-200.0).epsilon(1e-12));
  try {
    rmse_reduction(vec({1, 2}), vec({1, 2}), vec({1, 2}));
    FAIL("expected an error for a perfect baseline");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RawPerfect);
  }
}

TEST_CASE("correlation basics") {
  Eigen::VectorXd x = vec({1, 2, 3, 4});
  CHECK(correlation(2 * x.array() + 1, x) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(correlation(-x, x) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK_THROWS_AS(correlation(vec({1, 1, 1}), x.head(3)), Error);
  CHECK_THROWS_AS(correlation(vec({1}), vec({2})), Error);
}

TEST_CASE("weighted correlation matches the direct formula") {
  Rng rng(32, "corr");
  for (int trial = 0; trial < 8; ++trial) {
    Rng tr = rng.keyed(static_cast<std::uint64_t>(trial));
    int n = 4 + static_cast<int>(tr.below(0, 16));
    Eigen::VectorXd x(n), y(n), w(n);
    for (int i = 0; i < n; ++i) {
      x[i] = tr.normal(static_cast<std::uint64_t>(3 * i));
      y[i] = 0.4 * x[i] + tr.normal(static_cast<std::uint64_t>(3 * i + 1));
      w[i] = tr.uniform(static_cast<std::uint64_t>(3 * i + 2), 0.1, 4.0);
    }
    CHECK(correlation(x, y, &w) == doctest::Approx(naive_corr(x, y, w)).epsilon(1e-12));
  }
}

TEST_CASE("rank correlation uses midranks") {
  // a monotone transform is rank-perfect but not linear
  Eigen::VectorXd x = vec({1, 5, 9, 20, 2});
  Eigen::VectorXd y = x.array().cube();
  CHECK(correlation(x, y, nullptr, true) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(correlation(x, y) < 1.0);

  // ties get the average rank
  Eigen::VectorXd a = vec({1, 2, 2, 3});
  Eigen::VectorXd b = vec({10, 30, 20, 40});
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(4);
  double want = naive_corr(naive_midranks(a), naive_midranks(b), ones);
  CHECK(correlation(a, b, nullptr, true) == doctest::Approx(want).epsilon(1e-12));

  // weights enter the moments but never the ranks
  Eigen::VectorXd w = vec({1, 5, 2, 1});
  double weighted_want = naive_corr(naive_midranks(a), naive_midranks(b), w);
  CHECK(correlation(a, b, &w, true) == doctest::Approx(weighted_want).epsilon(1e-12));
}

TEST_CASE("aggregated indicator bias") {
  CHECK(demographic_bias(vec({10, 20}), vec({0.5, 0.5}), 12.0) ==
        doctest::Approx(25.0).epsilon(1e-12));
  CHECK(demographic_bias(vec({10, 20}), vec({0.5, 0.5}), 15.0) ==
        doctest::Approx(0.0).scale(1.0));
  try {
    demographic_bias(vec({1}), vec({1}), 0.0);
    FAIL("expected zero-truth error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroTotal);
  }
}

TEST_CASE("incoming migration rate per block") {
  BlockPartition p{"half", Eigen::VectorXi(4), 2};
  p.blocks << 0, 0, 1, 1;
  std::vector<Eigen::Triplet<double>> t = {
      {0, 1, 5.0},   // within block 0
      {2, 0, 10.0},  // into block 0
      {3, 2, 4.0},   // within block 1
      {1, 3, 6.0},   // into block 1
  };
  FlowMatrix m = FlowMatrix::from_triplets(4, 2015, t);
  Eigen::VectorXd rate = in_migration_rate(m, p);
  CHECK(rate[0] == doctest::Approx(10.0 / 15.0).epsilon(1e-12));
  CHECK(rate[1] == doctest::Approx(6.0 / 10.0).epsilon(1e-12));

  // a block nobody enters has no defined rate
  FlowMatrix only_left = FlowMatrix::from_triplets(4, 2015, {{2, 0, 3.0}, {0, 1, 1.0}});
  Eigen::VectorXd r2 = in_migration_rate(only_left, p);
  CHECK(std::isnan(r2[1]));
  CHECK(r2[0] == doctest::Approx(3.0 / 4.0).epsilon(1e-12));
}

TEST_CASE("flow vectorization walks the union pattern in stable order") {
  FlowMatrix est = FlowMatrix::from_triplets(4, 2015, {{0, 1, 2.0}, {2, 3, 7.0}});
  FlowMatrix tru = FlowMatrix::from_triplets(4, 2015, {{0, 1, 3.0}, {1, 0, 4.0}});
  AlignedVectors v = vectorize_flows(est, tru, BlockPartition::identity(4), false);
  REQUIRE(v.estimate.size() == 3);  // pairs (0,1), (1,0), (2,3)
  CHECK(v.estimate[0] == 2.0);
  CHECK(v.truth[0] == 3.0);
  CHECK(v.estimate[1] == 0.0);
  CHECK(v.truth[1] == 4.0);
  CHECK(v.estimate[2] == 7.0);
  CHECK(v.truth[2] == 0.0);
}

TEST_CASE("vectorization aggregates blocks and can drop stayers") {
  BlockPartition p{"half", Eigen::VectorXi(4), 2};
  p.blocks << 0, 0, 1, 1;
  FlowMatrix est = FlowMatrix::from_triplets(
      4, 2015, {{0, 1, 2.0}, {1, 0, 3.0}, {2, 0, 5.0}, {3, 3, 1.0}});
  FlowMatrix tru = FlowMatrix::from_triplets(4, 2015, {{0, 2, 9.0}, {2, 3, 4.0}});
  AlignedVectors all = vectorize_flows(est, tru, p, false);
  REQUIRE(all.estimate.size() == 4);  // block pairs (0,0), (0,1), (1,0), (1,1)
  CHECK(all.estimate[0] == 5.0);  // 2 + 3 within block 0
  CHECK(all.truth[0] == 0.0);
  CHECK(all.estimate[1] == 0.0);
  CHECK(all.truth[1] == 9.0);
  CHECK(all.estimate[2] == 5.0);
  CHECK(all.truth[2] == 0.0);
  CHECK(all.estimate[3] == 1.0);
  CHECK(all.truth[3] == 4.0);

  AlignedVectors movers = vectorize_flows(est, tru, p, true);
  REQUIRE(movers.estimate.size() == 2);  // (0,1) and (1,0) only
  CHECK(movers.truth[0] == 9.0);
  CHECK(movers.estimate[1] == 5.0);
}

TEST_CASE("vectorization rejects mismatched sizes") {
  FlowMatrix a(3, 2015), b(4, 2015);
  CHECK_THROWS_AS(vectorize_flows(a, b, BlockPartition::identity(3), false), Error);
}

TEST_CASE("movers only drops within-block pairs") {
  BlockPartition p{"half", Eigen::VectorXi(4), 2};
  p.blocks << 0, 0, 1, 1;
  FlowMatrix est = FlowMatrix::from_triplets(4, 2015, {{0, 1, 2.0}, {2, 0, 5.0}});
  FlowMatrix tru = FlowMatrix::from_triplets(4, 2015, {{1, 3, 6.0}});
  AlignedVectors v = vectorize_flows(est, tru, p, true);
  REQUIRE(v.estimate.size() == 2);  // (1,0) from est and (0,1) from tru survive
  CHECK(v.estimate[0] == 0.0);
  CHECK(v.truth[0] == 6.0);
  CHECK(v.estimate[1] == 5.0);
  CHECK(v.truth[1] == 0.0);
}

TEST_CASE("national rescale fixes the total") {
  FlowMatrix m = FlowMatrix::from_triplets(3, 2015, {{0, 1, 4.0}, {2, 2, 6.0}});
  FlowMatrix out = national_rescale(m, 250.0);
  CHECK(out.total() == doctest::Approx(250.0).epsilon(1e-12));
  CHECK(out.at(0, 1) == doctest::Approx(100.0).epsilon(1e-12));
  CHECK_THROWS_AS(national_rescale(m, 0.0), Error);
  CHECK_THROWS_AS(national_rescale(m, -5.0), Error);
  FlowMatrix empty(3, 2015);
  CHECK_THROWS_AS(national_rescale(empty, 10.0), Error);
}
