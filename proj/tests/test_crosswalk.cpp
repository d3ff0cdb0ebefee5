#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "migrate/crosswalk.hpp"
#include "migrate/rng.hpp"

using namespace migrate;

namespace {

GeoHierarchy grid_hierarchy() {
  // 5 CBGs: T1 = {B1, B2}, T2 = {B3}, T3 = {B4, B5}; one county, one state
  return GeoHierarchy::build({
      {"B1", "T1", "C1", "S1", 0, 0},
      {"B2", "T1", "C1", "S1", 0, 0},
      {"B3", "T2", "C1", "S1", 0, 0},
      {"B4", "T3", "C1", "S1", 0, 0},
      {"B5", "T3", "C1", "S1", 0, 0},
  });
}

AddressMatrix address_matrix(std::vector<std::string> ids,
                             const std::vector<Eigen::Triplet<double>>& ts, int year = 2015) {
  AddressMatrix m;
  m.year = year;
  m.address_ids = std::move(ids);
  Eigen::Index n = static_cast<Eigen::Index>(m.address_ids.size());
  m.flows.resize(n, n);
  m.flows.setFromTriplets(ts.begin(), ts.end());
  m.flows.makeCompressed();
  return m;
}

// dense transform: E = Gt (A - diag) G + diag(Gt diagvec)
Eigen::MatrixXd dense_transform(const Eigen::MatrixXd& a, const Eigen::MatrixXd& g) {
  Eigen::MatrixXd off = a;
  off.diagonal().setZero();
  Eigen::MatrixXd e = g.transpose() * off * g;
  e += Eigen::MatrixXd((g.transpose() * Eigen::VectorXd(a.diagonal())).asDiagonal());
  return e;
}

}  // namespace

TEST_CASE("exact assignments give unit rows") {
  GeoHierarchy h = grid_hierarchy();
  CrosswalkMatrix g = build_crosswalk({{"a1", "B3"}, {"a2", "B1"}}, {}, {}, h);
  CHECK(g.rows().rows() == 2);
  Eigen::Index a1 = g.address_index("a1");
  CHECK(g.rows().coeff(a1, h.cbg_index("B3")) == 1.0);
  CHECK(g.rows().row(a1).sum() == 1.0);
}

TEST_CASE("duplicate exact rows must agree") {
  GeoHierarchy h = grid_hierarchy();
  CHECK_NOTHROW(build_crosswalk({{"a1", "B3"}, {"a1", "B3"}}, {}, {}, h));
  try {
    build_crosswalk({{"a1", "B3"}, {"a1", "B4"}}, {}, {}, h);
    FAIL("expected DuplicateId");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DuplicateId);
  }
}

TEST_CASE("unknown areas rejected") {
  GeoHierarchy h = grid_hierarchy();
  CHECK_THROWS_AS(build_crosswalk({{"a1", "nope"}}, {}, {}, h), Error);
  ZipAssignment z{"a2", "99999", {{"nope", 1.0}}};
  CHECK_THROWS_AS(build_crosswalk({}, {z}, {}, h), Error);
}

TEST_CASE("single-tract fuzzy row splits by population share") {
  GeoHierarchy h = grid_hierarchy();
  ZipAssignment z{"a1", "11111", {{"T1", 1.0}}};
  CrosswalkMatrix g = build_crosswalk({}, {z}, {{"B1", 100.0}, {"B2", 300.0}}, h);
  Eigen::Index r = g.address_index("a1");
  CHECK(g.rows().coeff(r, h.cbg_index("B1")) == doctest::Approx(0.25));
  CHECK(g.rows().coeff(r, h.cbg_index("B2")) == doctest::Approx(0.75));
}

TEST_CASE("two-stage allocation matches the hand computation") {
  GeoHierarchy h = grid_hierarchy();
  // tract weights {T1: 0.6, T2: 0.4}; T1 pops {50, 50}; T2 pop {200}
  ZipAssignment z{"a1", "22222", {{"T1", 0.6}, {"T2", 0.4}}};
  CrosswalkMatrix g =
      build_crosswalk({}, {z}, {{"B1", 50.0}, {"B2", 50.0}, {"B3", 200.0}}, h);
  Eigen::Index r = g.address_index("a1");
  CHECK(g.rows().coeff(r, h.cbg_index("B1")) == doctest::Approx(0.3));
  CHECK(g.rows().coeff(r, h.cbg_index("B2")) == doctest::Approx(0.3));
  CHECK(g.rows().coeff(r, h.cbg_index("B3")) == doctest::Approx(0.4));
}

TEST_CASE("unnormalized tract weights are normalized") {
  GeoHierarchy h = grid_hierarchy();
  ZipAssignment z{"a1", "22222", {{"T1", 3.0}, {"T2", 2.0}}};
  CrosswalkMatrix g =
      build_crosswalk({}, {z}, {{"B1", 50.0}, {"B2", 50.0}, {"B3", 200.0}}, h);
  Eigen::Index r = g.address_index("a1");
  CHECK(g.rows().row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.rows().coeff(r, h.cbg_index("B3")) == doctest::Approx(0.4));
}

TEST_CASE("zero-population tract falls back to uniform split") {
  GeoHierarchy h = grid_hierarchy();
  ZipAssignment z{"a1", "33333", {{"T3", 1.0}}};
  CrosswalkMatrix g = build_crosswalk({}, {z}, {}, h);  // no population data at all
  Eigen::Index r = g.address_index("a1");
  CHECK(g.rows().coeff(r, h.cbg_index("B4")) == doctest::Approx(0.5));
  CHECK(g.rows().coeff(r, h.cbg_index("B5")) == doctest::Approx(0.5));
}

TEST_CASE("exact assignment wins over a fuzzy row for the same address") {
  GeoHierarchy h = grid_hierarchy();
  ZipAssignment z{"a1", "11111", {{"T1", 1.0}}};
  CrosswalkMatrix g = build_crosswalk({{"a1", "B3"}}, {z}, {{"B1", 1.0}, {"B2", 1.0}}, h);
  Eigen::Index r = g.address_index("a1");
  CHECK(g.rows().coeff(r, h.cbg_index("B3")) == 1.0);
  CHECK(g.rows().row(r).nonZeros() == 1);
}

TEST_CASE("every crosswalk row is a probability distribution") {
  GeoHierarchy h = grid_hierarchy();
  std::vector<ZipAssignment> fuzzy = {
      {"z1", "1", {{"T1", 0.7}, {"T3", 0.3}}},
      {"z2", "2", {{"T2", 1.0}}},
      {"z3", "3", {{"T3", 5.0}}},
  };
  CrosswalkMatrix g = build_crosswalk({{"e1", "B1"}}, fuzzy,
                                      {{"B1", 10}, {"B2", 30}, {"B3", 7}, {"B4", 0}, {"B5", 2}},
                                      h);
  for (Eigen::Index i = 0; i < g.rows().rows(); ++i) {
    double s = 0;
    bool positive = true;
    for (SparseRowMatrix::InnerIterator it(g.rows(), i); it; ++it) {
      s += it.value();
      positive = positive && it.value() > 0 && it.value() <= 1;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(positive);
  }
}

TEST_CASE("exact-only crosswalk relabels the matrix") {
  GeoHierarchy h = grid_hierarchy();
  CrosswalkMatrix g = build_crosswalk({{"a1", "B2"}, {"a2", "B4"}}, {}, {}, h);
  AddressMatrix a = address_matrix({"a1", "a2"}, {{0, 0, 3.0}, {0, 1, 1.5}, {1, 1, 2.0}});
  CrosswalkApplication out = apply_crosswalk(a, g);
  CHECK(out.dropped_addresses == 0);
  CHECK(out.matrix.at(h.cbg_index("B2"), h.cbg_index("B2")) == 3.0);
  CHECK(out.matrix.at(h.cbg_index("B2"), h.cbg_index("B4")) == 1.5);
  CHECK(out.matrix.at(h.cbg_index("B4"), h.cbg_index("B4")) == 2.0);
  CHECK(out.matrix.nonzeros() == 3);
}

TEST_CASE("fuzzy stayer lands only on the diagonal") {
  GeoHierarchy h = grid_hierarchy();
  ZipAssignment z{"a1", "11111", {{"T1", 1.0}}};
  CrosswalkMatrix g = build_crosswalk({}, {z}, {{"B1", 100.0}, {"B2", 300.0}}, h);
  AddressMatrix a = address_matrix({"a1"}, {{0, 0, 1.0}});
  CrosswalkApplication out = apply_crosswalk(a, g);
  CHECK(out.matrix.at(h.cbg_index("B1"), h.cbg_index("B1")) == doctest::Approx(0.25));
  CHECK(out.matrix.at(h.cbg_index("B2"), h.cbg_index("B2")) == doctest::Approx(0.75));
  // nothing off the diagonal
  CHECK(out.matrix.diagonal().sum() == doctest::Approx(out.matrix.total()).epsilon(1e-12));
}

TEST_CASE("fuzzy mover spreads over the destination sub-block") {
  GeoHierarchy h = grid_hierarchy();
  // origin zip covers T1 {B1,B2} equally; destination zip covers T3 {B4,B5} equally
  std::vector<ZipAssignment> fuzzy = {
      {"a1", "1", {{"T1", 1.0}}},
      {"a2", "2", {{"T3", 1.0}}},
  };
  CrosswalkMatrix g =
      build_crosswalk({}, fuzzy, {{"B1", 10}, {"B2", 10}, {"B4", 10}, {"B5", 10}}, h);
  AddressMatrix a = address_matrix({"a1", "a2"}, {{0, 1, 1.0}});
  CrosswalkApplication out = apply_crosswalk(a, g);
  for (const char* o : {"B1", "B2"})
    for (const char* d : {"B4", "B5"})
      CHECK(out.matrix.at(h.cbg_index(o), h.cbg_index(d)) == doctest::Approx(0.25));
  CHECK(out.matrix.total() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("addresses missing from the crosswalk are dropped and counted") {
  GeoHierarchy h = grid_hierarchy();
  CrosswalkMatrix g = build_crosswalk({{"a1", "B1"}}, {}, {}, h);
  AddressMatrix a =
      address_matrix({"a1", "ghost"}, {{0, 0, 2.0}, {0, 1, 1.0}, {1, 0, 0.5}, {1, 1, 3.0}});
  CrosswalkApplication out = apply_crosswalk(a, g);
  CHECK(out.dropped_addresses == 1);
  CHECK(out.dropped_mass == doctest::Approx(1.0 + 0.5 + 3.0));
  CHECK(out.matrix.total() == doctest::Approx(2.0));
}

TEST_CASE("random matrices match the dense oracle and conserve mass") {
  GeoHierarchy h = grid_hierarchy();
  Rng rng(7, "xwalk");
  std::vector<std::string> ids;
  for (int i = 0; i < 8; ++i) ids.push_back("a" + std::to_string(i));
  // half exact, half fuzzy
  std::vector<std::pair<std::string, std::string>> exact;
  std::vector<ZipAssignment> fuzzy;
  const char* cbgs[] = {"B1", "B2", "B3", "B4", "B5"};
  const char* tracts[] = {"T1", "T2", "T3"};
  for (int i = 0; i < 8; ++i) {
    Rng ar = rng.keyed(static_cast<std::uint64_t>(i));
    if (i % 2 == 0) {
      exact.emplace_back(ids[static_cast<std::size_t>(i)], cbgs[ar.below(0, 5)]);
    } else {
      ZipAssignment z;
      z.address_id = ids[static_cast<std::size_t>(i)];
      z.zip = std::to_string(10000 + i);
      int k = 1 + static_cast<int>(ar.below(1, 3));
      for (int t = 0; t < k; ++t)
        z.tract_weights.emplace_back(tracts[(ar.below(2, 3) + static_cast<std::uint64_t>(t)) % 3],
                                     ar.uniform(10 + static_cast<std::uint64_t>(t), 0.1, 1.0));
      fuzzy.push_back(std::move(z));
    }
  }
  std::unordered_map<std::string, double> pops = {
      {"B1", 120}, {"B2", 45}, {"B3", 300}, {"B4", 80}, {"B5", 0}};
  CrosswalkMatrix g = build_crosswalk(exact, fuzzy, pops, h);

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng mr = rng.keyed(1000 + seed);
    std::vector<Eigen::Triplet<double>> ts;
    std::uint64_t c = 0;
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j, ++c)
        if (mr.uniform(2 * c) < 0.4) ts.emplace_back(i, j, mr.uniform(2 * c + 1, 0.5, 4.0));
    AddressMatrix a = address_matrix(ids, ts);
    CrosswalkApplication out = apply_crosswalk(a, g);

    Eigen::MatrixXd ad = Eigen::MatrixXd(a.flows);
    Eigen::MatrixXd gd = Eigen::MatrixXd(g.rows());
    Eigen::MatrixXd want = dense_transform(ad, gd);
    CHECK((out.matrix.dense() - want).cwiseAbs().maxCoeff() < 1e-12);
    double total_in = ad.sum();
    CHECK(out.matrix.total() == doctest::Approx(total_in).epsilon(1e-6));
    // stayer mass can only gain company on the diagonal (address-level movers
    // between addresses sharing a CBG are CBG-level stayers), never leave it
    CHECK(out.matrix.diagonal().sum() >= ad.diagonal().sum() * (1 - 1e-9));

    // the stayer part alone maps onto the diagonal with its total intact
    AddressMatrix stay;
    stay.year = a.year;
    stay.address_ids = a.address_ids;
    Eigen::MatrixXd diag_only = Eigen::MatrixXd(Eigen::VectorXd(ad.diagonal()).asDiagonal());
    stay.flows = diag_only.sparseView();
    stay.flows.makeCompressed();
    CrosswalkApplication stay_out = apply_crosswalk(stay, g);
    CHECK(stay_out.matrix.diagonal().sum() ==
          doctest::Approx(ad.diagonal().sum()).epsilon(1e-6));
    CHECK(stay_out.matrix.total() ==
          doctest::Approx(stay_out.matrix.diagonal().sum()).epsilon(1e-12));
  }
}

TEST_CASE("breaking row-stochasticity breaks conservation") {
  GeoHierarchy h = grid_hierarchy();
  ZipAssignment z{"a1", "1", {{"T1", 1.0}}};
  CrosswalkMatrix g = build_crosswalk({}, {z}, {{"B1", 1.0}, {"B2", 1.0}}, h);
  // sabotage one row so it sums to 0.8
  SparseRowMatrix broken = g.rows();
  for (SparseRowMatrix::InnerIterator it(broken, 0); it; ++it) it.valueRef() *= 0.8;
  AddressMatrix a = address_matrix({"a1"}, {{0, 0, 1.0}});
  // compute with the sabotaged matrix via the dense oracle: mass not conserved
  Eigen::MatrixXd want = dense_transform(Eigen::MatrixXd(a.flows), Eigen::MatrixXd(broken));
  CHECK(std::abs(want.sum() - 1.0) > 1e-3);
}
