#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "migrate/error.hpp"

namespace migrate {

enum class GeoLevel { Cbg, Tract, County, State };

const char* geo_level_name(GeoLevel level);

// Grouping of CBG indices into contiguous-numbered blocks.  `blocks[i]` is the
// block of CBG i; block ids run 0..block_count-1.  A partition remembers the
// universe size so matrix operations can reject a partition built for a
// different hierarchy.
struct BlockPartition {
  std::string label;
  Eigen::VectorXi blocks;
  int block_count = 0;

  Eigen::Index size() const { return blocks.size(); }
  int block_of(Eigen::Index i) const { return blocks[static_cast<int>(i)]; }

  // One block per element.
  static BlockPartition identity(Eigen::Index n);
  // Everything in a single block.
  static BlockPartition single(Eigen::Index n);
};

struct CbgRecord {
  std::string cbg_id;
  std::string tract_id;
  std::string county_id;
  std::string state_id;
  // NaN when unknown.
  double lat = std::numeric_limits<double>::quiet_NaN();
  double lon = std::numeric_limits<double>::quiet_NaN();
};

// A merge or split of areas, already reduced to "these member ids map onto
// this surviving id".  Splits are expressed the same way with the caller
// naming the survivor, so both kinds apply identically; `kind` is metadata.
struct GeographyChange {
  enum class Kind { Merge, Split };
  int year = 0;
  Kind kind = Kind::Merge;
  std::string survivor;
  std::vector<std::string> members;
};

// Immutable CBG -> tract -> county -> state containment with optional
// centroids.  Ids at every level are sorted, so indices are reproducible
// regardless of input order.
class GeoHierarchy {
 public:
  static GeoHierarchy build(std::vector<CbgRecord> records);

  Eigen::Index cbg_count() const { return static_cast<Eigen::Index>(cbg_ids_.size()); }
  int tract_count() const { return static_cast<int>(tract_ids_.size()); }
  int county_count() const { return static_cast<int>(county_ids_.size()); }
  int state_count() const { return static_cast<int>(state_ids_.size()); }

  const std::vector<std::string>& cbg_ids() const { return cbg_ids_; }
  const std::vector<std::string>& tract_ids() const { return tract_ids_; }
  const std::vector<std::string>& county_ids() const { return county_ids_; }
  const std::vector<std::string>& state_ids() const { return state_ids_; }

  // -1 when absent.
  Eigen::Index cbg_index(std::string_view id) const;
  int tract_index(std::string_view id) const;
  int county_index(std::string_view id) const;
  int state_index(std::string_view id) const;

  int tract_of(Eigen::Index cbg) const { return tract_of_[static_cast<std::size_t>(cbg)]; }
  int county_of(Eigen::Index cbg) const { return county_of_[static_cast<std::size_t>(cbg)]; }
  int state_of(Eigen::Index cbg) const { return state_of_[static_cast<std::size_t>(cbg)]; }
  int county_of_tract(int tract) const { return tract_county_[static_cast<std::size_t>(tract)]; }
  int state_of_county(int county) const { return county_state_[static_cast<std::size_t>(county)]; }

  bool has_centroid(Eigen::Index cbg) const;
  bool has_all_centroids() const;
  // Throws MissingCentroids when unknown.
  double lat(Eigen::Index cbg) const;
  double lon(Eigen::Index cbg) const;

  BlockPartition partition(GeoLevel level) const;

  const std::vector<CbgRecord>& records() const { return records_; }

 private:
  std::vector<CbgRecord> records_;
  std::vector<std::string> cbg_ids_, tract_ids_, county_ids_, state_ids_;
  std::unordered_map<std::string, Eigen::Index> cbg_lookup_;
  std::unordered_map<std::string, int> tract_lookup_, county_lookup_, state_lookup_;
  std::vector<int> tract_of_, county_of_, state_of_;
  std::vector<int> tract_county_, county_state_;
};

// Applies boundary changes in list order and rebuilds the hierarchy.  Member
// ids may name CBGs, tracts, or counties; all members of one change must live
// at the same level.  A member that no longer exists is skipped when the
// survivor already does (the change was applied upstream); otherwise it is an
// error.  Applying the same change list twice is a no-op.
GeoHierarchy apply_geography_changes(const GeoHierarchy& h,
                                     const std::vector<GeographyChange>& changes);

// Transitive member -> survivor map implied by a change list, for re-keying
// tables that live outside the hierarchy.  Ids are treated as opaque.
std::unordered_map<std::string, std::string> resolve_renames(
    const std::vector<GeographyChange>& changes);

// Margin of error of a sum of independent estimates.
double aggregate_moe(std::span<const double> moes);

// Great-circle distance in miles between two lat/lon points (degrees).
double haversine_miles(double lat1, double lon1, double lat2, double lon2);

}  // namespace migrate
