#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "migrate/flow_matrix.hpp"
#include "migrate/geo.hpp"

namespace migrate {

enum class RaceCategory { White, Asian, Black, Hispanic, Other };

RaceCategory parse_race(std::string_view s);
const char* race_name(RaceCategory r);

// The ten overlapping CBG categories: four plurality races, urban/rural, four
// income quartiles.  A CBG belongs to at most one category per dimension;
// "other" plurality race belongs to no race category but still counts among
// all movers.
inline constexpr int kCategoryCount = 10;
const std::array<std::string_view, kCategoryCount>& category_names();

// Per-CBG demographic labels.  Quartiles, deciles and percentiles all come
// from the same income ranking over CBGs (unweighted by population; ties
// break by CBG index).
struct CbgCategories {
  std::vector<RaceCategory> plurality_race;
  std::vector<char> urban;
  Eigen::VectorXd median_income;
  Eigen::VectorXi income_quartile;    // 1..4, 4 = top
  Eigen::VectorXi income_decile;      // 1..10
  Eigen::VectorXi income_percentile;  // 1..100

  Eigen::Index size() const { return median_income.size(); }
  bool in_category(Eigen::Index cbg, int category) const;
};

CbgCategories assign_categories(std::vector<RaceCategory> race, std::vector<char> urban,
                                Eigen::VectorXd median_income);

// 12 x 10 share table: one row per origin category, then "all movers", then
// "population share".  Cell (r, c) is the share of row r's movers landing in
// category c (for the population row: the share of total population living in
// c).  Movers are off-diagonal mass.  Rows with no movers are NaN.
inline constexpr int kAllMoversRow = 10;
inline constexpr int kPopulationShareRow = 11;
Eigen::MatrixXd category_flow_table(const FlowMatrix& m, const CbgCategories& cats);

// Each row of the table divided elementwise by the all-movers row, so the
// all-movers row maps to 1s.  A zero base share under a nonzero numerator is
// an error; 0/0 is NaN.
Eigen::MatrixXd homophily_ratios(const Eigen::MatrixXd& table);

enum class MobilityBucket { Decile, Percentile };
enum class MobilityTarget { HigherIncome, TopQuartile, BottomQuartile };
// Denominator for the per-bucket probability: movers from the filtered group
// in the bucket, or all movers in the bucket regardless of filter.  The
// second reads as "share of the bucket's moves made by this group to
// qualifying destinations" and is reported alongside the first.
enum class MobilityDenominator { Group, BucketAll };

// Probability per origin income bucket of moving to a qualifying destination.
// higher_income requires the destination's median income to be strictly
// greater.  Buckets with no qualifying denominator are NaN.
Eigen::VectorXd upward_mobility(const FlowMatrix& m, const CbgCategories& cats,
                                std::optional<RaceCategory> origin_filter, MobilityBucket bucket,
                                MobilityTarget target,
                                MobilityDenominator denom = MobilityDenominator::Group);

enum class DistanceStratify { Category, Boundary };

struct DistanceDistribution {
  std::vector<std::string> strata;   // "all" plus category names when given
  std::vector<std::string> buckets;  // distance bands or boundary classes
  Eigen::MatrixXd shares;            // strata x buckets, rows sum to 1 (or NaN)
};

// Mover mass by distance band (haversine miles between centroids, default
// edges {5, 50}) or by the finest boundary the move stays within.  Strata are
// origin-CBG categories; pass cats = nullptr for the "all" stratum only.
DistanceDistribution distance_distribution(const FlowMatrix& m, const GeoHierarchy& h,
                                           const std::vector<double>& edges,
                                           const CbgCategories* cats,
                                           DistanceStratify stratify);

// Out-migration rate per year (rows) and region (cols): off-diagonal mass of
// the region's rows over the region's total row mass.  Regions are CBG index
// sets; a region with no mass gives NaN for that year.
Eigen::MatrixXd region_out_migration_series(const std::vector<FlowMatrix>& years,
                                            const std::vector<std::vector<Eigen::Index>>& regions);

struct RedactionResult {
  FlowMatrix matrix;
  std::vector<Eigen::Index> redacted;
};

// Privacy guard: when q of a CBG's out-movers concentrate on at most k
// destinations, the whole off-diagonal row is zeroed.  The diagonal is
// preserved.  Applying the rule twice changes nothing.
RedactionResult redact_low_diversity(FlowMatrix m, int k = 10, double q = 0.90);

}  // namespace migrate
