#include "migrate/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace migrate {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

RaceCategory parse_race(std::string_view s) {
  if (s == "white") return RaceCategory::White;
  if (s == "asian") return RaceCategory::Asian;
  if (s == "black") return RaceCategory::Black;
  if (s == "hispanic") return RaceCategory::Hispanic;
  if (s == "other") return RaceCategory::Other;
  fail(ErrorCode::BadFormat, "race '" + std::string(s) + "'");
}

const char* race_name(RaceCategory r) {
  switch (r) {
    case RaceCategory::White: return "white";
    case RaceCategory::Asian: return "asian";
    case RaceCategory::Black: return "black";
    case RaceCategory::Hispanic: return "hispanic";
    case RaceCategory::Other: return "other";
  }
  return "?";
}

const std::array<std::string_view, kCategoryCount>& category_names() {
  static const std::array<std::string_view, kCategoryCount> names = {
      "white",     "asian",     "black",     "hispanic",  "urban",
      "rural",     "income_q1", "income_q2", "income_q3", "income_q4",
  };
  return names;
}

bool CbgCategories::in_category(Eigen::Index cbg, int category) const {
  switch (category) {
    case 0: return plurality_race[static_cast<std::size_t>(cbg)] == RaceCategory::White;
    case 1: return plurality_race[static_cast<std::size_t>(cbg)] == RaceCategory::Asian;
    case 2: return plurality_race[static_cast<std::size_t>(cbg)] == RaceCategory::Black;
    case 3: return plurality_race[static_cast<std::size_t>(cbg)] == RaceCategory::Hispanic;
    case 4: return urban[static_cast<std::size_t>(cbg)] != 0;
    case 5: return urban[static_cast<std::size_t>(cbg)] == 0;
    case 6: return income_quartile[cbg] == 1;
    case 7: return income_quartile[cbg] == 2;
    case 8: return income_quartile[cbg] == 3;
    case 9: return income_quartile[cbg] == 4;
  }
  return false;
}

CbgCategories assign_categories(std::vector<RaceCategory> race, std::vector<char> urban,
                                Eigen::VectorXd median_income) {
  Eigen::Index n = median_income.size();
  if (static_cast<Eigen::Index>(race.size()) != n || static_cast<Eigen::Index>(urban.size()) != n)
    fail(ErrorCode::LengthMismatch, "category inputs differ in length");
  if (!median_income.allFinite()) fail(ErrorCode::NonFiniteInput, "median income");

  CbgCategories out;
  out.plurality_race = std::move(race);
  out.urban = std::move(urban);
  out.median_income = std::move(median_income);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (out.median_income[a] != out.median_income[b])
      return out.median_income[a] < out.median_income[b];
    return a < b;
  });
  out.income_quartile.resize(n);
  out.income_decile.resize(n);
  out.income_percentile.resize(n);
  for (Eigen::Index rank = 0; rank < n; ++rank) {
    Eigen::Index i = order[static_cast<std::size_t>(rank)];
    out.income_quartile[i] = static_cast<int>(rank * 4 / n) + 1;
    out.income_decile[i] = static_cast<int>(rank * 10 / n) + 1;
    out.income_percentile[i] = static_cast<int>(rank * 100 / n) + 1;
  }
  return out;
}

Eigen::MatrixXd category_flow_table(const FlowMatrix& m, const CbgCategories& cats) {
  if (cats.size() != m.dim()) fail(ErrorCode::LengthMismatch, "categories do not cover the matrix");
  const Eigen::Index n = m.dim();

  // Per-CBG category memberships, precomputed once.
  std::vector<std::array<bool, kCategoryCount>> member(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < kCategoryCount; ++c)
      member[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = cats.in_category(i, c);

  // Flattened accumulator: pair mass [10 x 10], movers per origin category
  // [10], movers per destination category [10], total movers [1], population
  // per category [10], total population [1].
  constexpr Eigen::Index kPairs = kCategoryCount * kCategoryCount;
  constexpr Eigen::Index kCells = kPairs + kCategoryCount * 2 + 1 + kCategoryCount + 1;
  KahanVector acc = chunked_reduce<KahanVector>(
      n, [] { return KahanVector(kCells); },
      [&](KahanVector& part, Eigen::Index begin, Eigen::Index end) {
        const SparseRowMatrix& s = m.storage();
        for (Eigen::Index i = begin; i < end; ++i) {
          const auto& mi = member[static_cast<std::size_t>(i)];
          for (SparseRowMatrix::InnerIterator it(s, i); it; ++it) {
            double v = it.value();
            part.add(kPairs + 2 * kCategoryCount + 1 + kCategoryCount, v);  // total population
            for (int c = 0; c < kCategoryCount; ++c)
              if (mi[static_cast<std::size_t>(c)])
                part.add(kPairs + 2 * kCategoryCount + 1 + c, v);  // population per category
            if (it.col() == i) continue;
            const auto& mj = member[static_cast<std::size_t>(it.col())];
            part.add(kPairs + 2 * kCategoryCount, v);  // total movers
            for (int c = 0; c < kCategoryCount; ++c) {
              if (mi[static_cast<std::size_t>(c)]) part.add(kPairs + c, v);
              if (mj[static_cast<std::size_t>(c)]) part.add(kPairs + kCategoryCount + c, v);
            }
            for (int c = 0; c < kCategoryCount; ++c) {
              if (!mi[static_cast<std::size_t>(c)]) continue;
              for (int d = 0; d < kCategoryCount; ++d)
                if (mj[static_cast<std::size_t>(d)]) part.add(c * kCategoryCount + d, v);
            }
          }
        }
      },
      [](KahanVector& a, const KahanVector& b) { a.merge(b); });

  Eigen::MatrixXd table(kPopulationShareRow + 1, kCategoryCount);
  double total_movers = acc.sum[kPairs + 2 * kCategoryCount];
  double total_pop = acc.sum[kPairs + 2 * kCategoryCount + 1 + kCategoryCount];
  for (int d = 0; d < kCategoryCount; ++d) {
    for (int c = 0; c < kCategoryCount; ++c) {
      double from_c = acc.sum[kPairs + c];
      table(c, d) = from_c > 0.0 ? acc.sum[c * kCategoryCount + d] / from_c : kNaN;
    }
    double to_d = acc.sum[kPairs + kCategoryCount + d];
    table(kAllMoversRow, d) = total_movers > 0.0 ? to_d / total_movers : kNaN;
    double pop_d = acc.sum[kPairs + 2 * kCategoryCount + 1 + d];
    table(kPopulationShareRow, d) = total_pop > 0.0 ? pop_d / total_pop : kNaN;
  }
  return table;
}

Eigen::MatrixXd homophily_ratios(const Eigen::MatrixXd& table) {
  if (table.rows() != kPopulationShareRow + 1 || table.cols() != kCategoryCount)
    fail(ErrorCode::LengthMismatch, "category table must be 12 x 10");
  Eigen::MatrixXd out(table.rows(), table.cols());
  for (Eigen::Index r = 0; r < table.rows(); ++r)
    for (Eigen::Index c = 0; c < table.cols(); ++c) {
      double base = table(kAllMoversRow, c);
      double num = table(r, c);
      if (std::isnan(base) || std::isnan(num)) {
        out(r, c) = kNaN;
      } else if (base <= 0.0) {
        if (num == 0.0)
          out(r, c) = kNaN;
        else
          fail(ErrorCode::ZeroBaseShare, "all-movers share is zero for column " +
                                             std::string(category_names()[static_cast<std::size_t>(c)]));
      } else {
        out(r, c) = num / base;
      }
    }
  return out;
}

Eigen::VectorXd upward_mobility(const FlowMatrix& m, const CbgCategories& cats,
                                std::optional<RaceCategory> origin_filter, MobilityBucket bucket,
                                MobilityTarget target, MobilityDenominator denom) {
  if (cats.size() != m.dim()) fail(ErrorCode::LengthMismatch, "categories do not cover the matrix");
  const int buckets = bucket == MobilityBucket::Decile ? 10 : 100;
  const Eigen::VectorXi& assignment =
      bucket == MobilityBucket::Decile ? cats.income_decile : cats.income_percentile;

  auto qualifies = [&](Eigen::Index i, Eigen::Index j) {
    switch (target) {
      case MobilityTarget::HigherIncome: return cats.median_income[j] > cats.median_income[i];
      case MobilityTarget::TopQuartile: return cats.income_quartile[j] == 4;
      case MobilityTarget::BottomQuartile: return cats.income_quartile[j] == 1;
    }
    return false;
  };
  auto in_group = [&](Eigen::Index i) {
    return !origin_filter || cats.plurality_race[static_cast<std::size_t>(i)] == *origin_filter;
  };

  // Per bucket: qualifying group mass, group mass, all-movers mass.
  KahanVector acc = chunked_reduce<KahanVector>(
      m.dim(), [&] { return KahanVector(3 * buckets); },
      [&](KahanVector& part, Eigen::Index begin, Eigen::Index end) {
        const SparseRowMatrix& s = m.storage();
        for (Eigen::Index i = begin; i < end; ++i) {
          int b = assignment[i] - 1;
          bool group = in_group(i);
          for (SparseRowMatrix::InnerIterator it(s, i); it; ++it) {
            if (it.col() == i) continue;
            part.add(2 * buckets + b, it.value());
            if (!group) continue;
            part.add(buckets + b, it.value());
            if (qualifies(i, it.col())) part.add(b, it.value());
          }
        }
      },
      [](KahanVector& a, const KahanVector& b) { a.merge(b); });

  Eigen::VectorXd out(buckets);
  for (int b = 0; b < buckets; ++b) {
    double d = denom == MobilityDenominator::Group ? acc.sum[buckets + b] : acc.sum[2 * buckets + b];
    out[b] = d > 0.0 ? acc.sum[b] / d : kNaN;
  }
  return out;
}

DistanceDistribution distance_distribution(const FlowMatrix& m, const GeoHierarchy& h,
                                           const std::vector<double>& edges,
                                           const CbgCategories* cats,
                                           DistanceStratify stratify) {
  if (h.cbg_count() != m.dim()) fail(ErrorCode::PartitionMismatch, "hierarchy does not match matrix");
  if (cats && cats->size() != m.dim())
    fail(ErrorCode::LengthMismatch, "categories do not cover the matrix");

  DistanceDistribution out;
  int n_buckets;
  if (stratify == DistanceStratify::Category) {
    if (!h.has_all_centroids()) fail(ErrorCode::MissingCentroids, "distance buckets need centroids");
    for (std::size_t i = 1; i < edges.size(); ++i)
      if (edges[i] <= edges[i - 1]) fail(ErrorCode::BadConfig, "bucket edges must increase");
    if (edges.empty()) fail(ErrorCode::BadConfig, "no bucket edges");
    char buf[48];
    std::snprintf(buf, sizeof buf, "<%g", edges.front());
    out.buckets.push_back(buf);
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%g-%g", edges[i], edges[i + 1]);
      out.buckets.push_back(buf);
    }
    std::snprintf(buf, sizeof buf, ">=%g", edges.back());
    out.buckets.push_back(buf);
    n_buckets = static_cast<int>(edges.size()) + 1;
  } else {
    out.buckets = {"within_tract", "within_county", "within_state", "cross_state"};
    n_buckets = 4;
  }

  out.strata.push_back("all");
  if (cats)
    for (auto name : category_names()) out.strata.emplace_back(name);
  int n_strata = static_cast<int>(out.strata.size());

  auto bucket_of = [&](Eigen::Index i, Eigen::Index j) {
    if (stratify == DistanceStratify::Category) {
      double d = haversine_miles(h.lat(i), h.lon(i), h.lat(j), h.lon(j));
      int b = 0;
      while (b < static_cast<int>(edges.size()) && d >= edges[static_cast<std::size_t>(b)]) ++b;
      return b;
    }
    if (h.tract_of(i) == h.tract_of(j)) return 0;
    if (h.county_of(i) == h.county_of(j)) return 1;
    if (h.state_of(i) == h.state_of(j)) return 2;
    return 3;
  };

  KahanVector acc = chunked_reduce<KahanVector>(
      m.dim(), [&] { return KahanVector(static_cast<Eigen::Index>(n_strata) * n_buckets); },
      [&](KahanVector& part, Eigen::Index begin, Eigen::Index end) {
        const SparseRowMatrix& s = m.storage();
        for (Eigen::Index i = begin; i < end; ++i)
          for (SparseRowMatrix::InnerIterator it(s, i); it; ++it) {
            if (it.col() == i) continue;
            int b = bucket_of(i, it.col());
            part.add(b, it.value());
            if (cats)
              for (int c = 0; c < kCategoryCount; ++c)
                if (cats->in_category(i, c))
                  part.add(static_cast<Eigen::Index>(1 + c) * n_buckets + b, it.value());
          }
      },
      [](KahanVector& a, const KahanVector& b) { a.merge(b); });

  out.shares.resize(n_strata, n_buckets);
  for (int s = 0; s < n_strata; ++s) {
    double total = 0.0;
    for (int b = 0; b < n_buckets; ++b) total += acc.sum[static_cast<Eigen::Index>(s) * n_buckets + b];
    for (int b = 0; b < n_buckets; ++b)
      out.shares(s, b) =
          total > 0.0 ? acc.sum[static_cast<Eigen::Index>(s) * n_buckets + b] / total : kNaN;
  }
  return out;
}

Eigen::MatrixXd region_out_migration_series(const std::vector<FlowMatrix>& years,
                                            const std::vector<std::vector<Eigen::Index>>& regions) {
  if (years.empty()) fail(ErrorCode::BadConfig, "no matrices given");
  for (const auto& region : regions)
    if (region.empty()) fail(ErrorCode::EmptyRegion, "region with no cbgs");

  Eigen::MatrixXd out(static_cast<Eigen::Index>(years.size()),
                      static_cast<Eigen::Index>(regions.size()));
  for (std::size_t y = 0; y < years.size(); ++y) {
    const FlowMatrix& m = years[y];
    for (std::size_t r = 0; r < regions.size(); ++r) {
      KahanSum total, off;
      for (Eigen::Index i : regions[r]) {
        if (i < 0 || i >= m.dim()) fail(ErrorCode::UnknownArea, "region cbg index out of range");
        for (SparseRowMatrix::InnerIterator it(m.storage(), i); it; ++it) {
          total.add(it.value());
          if (it.col() != i) off.add(it.value());
        }
      }
      out(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(r)) =
          total.value() > 0.0 ? off.value() / total.value() : kNaN;
    }
  }
  return out;
}

RedactionResult redact_low_diversity(FlowMatrix m, int k, double q) {
  if (k < 1) fail(ErrorCode::BadConfig, "k must be >= 1");
  if (!(q > 0.0 && q <= 1.0)) fail(ErrorCode::BadConfig, "q must be in (0, 1]");

  std::vector<Eigen::Index> redacted;
  SparseRowMatrix& s = m.storage();
  std::vector<double> masses;
  for (Eigen::Index i = 0; i < m.dim(); ++i) {
    masses.clear();
    KahanSum out_mass;
    for (SparseRowMatrix::InnerIterator it(s, i); it; ++it) {
      if (it.col() == i) continue;
      masses.push_back(it.value());
      out_mass.add(it.value());
    }
    if (masses.empty() || out_mass.value() <= 0.0) continue;
    std::sort(masses.begin(), masses.end(), std::greater<>());
    // Cushion absorbs summation noise so "exactly q" still counts as covered.
    double need = q * out_mass.value() - 1e-9 * out_mass.value();
    double cum = 0.0;
    int used = 0;
    for (double v : masses) {
      cum += v;
      ++used;
      if (cum >= need) break;
    }
    if (used <= k) {
      redacted.push_back(i);
      for (SparseRowMatrix::InnerIterator it(s, i); it; ++it)
        if (it.col() != i) it.valueRef() = 0.0;
    }
  }
  m.prune();
  return {std::move(m), std::move(redacted)};
}

}  // namespace migrate
