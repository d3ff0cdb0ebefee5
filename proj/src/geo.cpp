#include "migrate/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace migrate {

const char* geo_level_name(GeoLevel level) {
  switch (level) {
    case GeoLevel::Cbg: return "cbg";
    case GeoLevel::Tract: return "tract";
    case GeoLevel::County: return "county";
    case GeoLevel::State: return "state";
  }
  return "?";
}

BlockPartition BlockPartition::identity(Eigen::Index n) {
  BlockPartition p;
  p.label = "identity";
  p.blocks = Eigen::VectorXi::LinSpaced(static_cast<int>(n), 0, static_cast<int>(n) - 1);
  p.block_count = static_cast<int>(n);
  return p;
}

BlockPartition BlockPartition::single(Eigen::Index n) {
  BlockPartition p;
  p.label = "single";
  p.blocks = Eigen::VectorXi::Zero(static_cast<int>(n));
  p.block_count = 1;
  return p;
}

namespace {

template <class Map>
auto lookup_or(const Map& m, std::string_view id, typename Map::mapped_type missing) {
  auto it = m.find(std::string(id));
  return it == m.end() ? missing : it->second;
}

}  // namespace

GeoHierarchy GeoHierarchy::build(std::vector<CbgRecord> records) {
  std::sort(records.begin(), records.end(),
            [](const CbgRecord& a, const CbgRecord& b) { return a.cbg_id < b.cbg_id; });
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].cbg_id == records[i - 1].cbg_id)
      fail(ErrorCode::DuplicateId, "cbg " + records[i].cbg_id);
  }

  GeoHierarchy h;
  std::set<std::string> tracts, counties, states;
  for (const auto& r : records) {
    tracts.insert(r.tract_id);
    counties.insert(r.county_id);
    states.insert(r.state_id);
  }
  h.tract_ids_.assign(tracts.begin(), tracts.end());
  h.county_ids_.assign(counties.begin(), counties.end());
  h.state_ids_.assign(states.begin(), states.end());
  for (std::size_t i = 0; i < h.tract_ids_.size(); ++i) h.tract_lookup_[h.tract_ids_[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < h.county_ids_.size(); ++i) h.county_lookup_[h.county_ids_[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < h.state_ids_.size(); ++i) h.state_lookup_[h.state_ids_[i]] = static_cast<int>(i);

  h.tract_county_.assign(h.tract_ids_.size(), -1);
  h.county_state_.assign(h.county_ids_.size(), -1);
  h.cbg_ids_.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    int t = h.tract_lookup_[r.tract_id];
    int c = h.county_lookup_[r.county_id];
    int s = h.state_lookup_[r.state_id];
    if (h.tract_county_[t] == -1) h.tract_county_[t] = c;
    else if (h.tract_county_[t] != c)
      fail(ErrorCode::InconsistentContainment,
           "tract " + r.tract_id + " claimed by counties " + h.county_ids_[h.tract_county_[t]] +
               " and " + r.county_id);
    if (h.county_state_[c] == -1) h.county_state_[c] = s;
    else if (h.county_state_[c] != s)
      fail(ErrorCode::InconsistentContainment,
           "county " + r.county_id + " claimed by states " + h.state_ids_[h.county_state_[c]] +
               " and " + r.state_id);
    h.cbg_ids_.push_back(r.cbg_id);
    h.cbg_lookup_[r.cbg_id] = static_cast<Eigen::Index>(i);
    h.tract_of_.push_back(t);
    h.county_of_.push_back(c);
    h.state_of_.push_back(s);
  }
  h.records_ = std::move(records);
  return h;
}

Eigen::Index GeoHierarchy::cbg_index(std::string_view id) const {
  return lookup_or(cbg_lookup_, id, Eigen::Index{-1});
}
int GeoHierarchy::tract_index(std::string_view id) const { return lookup_or(tract_lookup_, id, -1); }
int GeoHierarchy::county_index(std::string_view id) const { return lookup_or(county_lookup_, id, -1); }
int GeoHierarchy::state_index(std::string_view id) const { return lookup_or(state_lookup_, id, -1); }

bool GeoHierarchy::has_centroid(Eigen::Index cbg) const {
  const auto& r = records_[static_cast<std::size_t>(cbg)];
  return std::isfinite(r.lat) && std::isfinite(r.lon);
}

bool GeoHierarchy::has_all_centroids() const {
  for (Eigen::Index i = 0; i < cbg_count(); ++i)
    if (!has_centroid(i)) return false;
  return cbg_count() > 0;
}

double GeoHierarchy::lat(Eigen::Index cbg) const {
  if (!has_centroid(cbg)) fail(ErrorCode::MissingCentroids, "cbg " + cbg_ids_[static_cast<std::size_t>(cbg)]);
  return records_[static_cast<std::size_t>(cbg)].lat;
}

double GeoHierarchy::lon(Eigen::Index cbg) const {
  if (!has_centroid(cbg)) fail(ErrorCode::MissingCentroids, "cbg " + cbg_ids_[static_cast<std::size_t>(cbg)]);
  return records_[static_cast<std::size_t>(cbg)].lon;
}

BlockPartition GeoHierarchy::partition(GeoLevel level) const {
  if (level == GeoLevel::Cbg) {
    BlockPartition p = BlockPartition::identity(cbg_count());
    p.label = "cbg";
    return p;
  }
  BlockPartition p;
  p.label = geo_level_name(level);
  p.blocks.resize(static_cast<int>(cbg_count()));
  const std::vector<int>& src =
      level == GeoLevel::Tract ? tract_of_ : level == GeoLevel::County ? county_of_ : state_of_;
  for (Eigen::Index i = 0; i < cbg_count(); ++i) p.blocks[static_cast<int>(i)] = src[static_cast<std::size_t>(i)];
  p.block_count = level == GeoLevel::Tract ? tract_count()
                 : level == GeoLevel::County ? county_count()
                                             : state_count();
  return p;
}

namespace {

enum class ChangeLevel { Cbg, Tract, County, None };

ChangeLevel classify(const GeoHierarchy& h, const std::string& id, const GeographyChange& ch) {
  int hits = 0;
  ChangeLevel level = ChangeLevel::None;
  if (h.cbg_index(id) >= 0) { ++hits; level = ChangeLevel::Cbg; }
  if (h.tract_index(id) >= 0) { ++hits; level = ChangeLevel::Tract; }
  if (h.county_index(id) >= 0) { ++hits; level = ChangeLevel::County; }
  if (hits > 1)
    fail(ErrorCode::AmbiguousMember, "id " + id + " exists at multiple levels (change " +
                                         ch.survivor + ")");
  return level;
}

struct Parents {
  std::string tract, county, state;
};

GeoHierarchy apply_one(const GeoHierarchy& h, const GeographyChange& ch) {
  if (ch.members.empty()) return h;

  ChangeLevel level = ChangeLevel::None;
  std::vector<std::string> present;
  for (const auto& m : ch.members) {
    ChangeLevel ml = classify(h, m, ch);
    if (ml == ChangeLevel::None) continue;
    if (level != ChangeLevel::None && ml != level)
      fail(ErrorCode::InconsistentContainment,
           "change " + ch.survivor + " mixes members from different levels");
    level = ml;
    present.push_back(m);
  }
  ChangeLevel survivor_level = classify(h, ch.survivor, ch);
  bool survivor_exists = survivor_level != ChangeLevel::None;
  if (present.empty()) {
    // Nothing left to rename.  Fine when the survivor is already in place
    // (change applied upstream), an error otherwise.
    if (survivor_exists) return h;
    fail(ErrorCode::UnknownMember, "change " + ch.survivor + ": no member exists");
  }
  if (survivor_exists && survivor_level != level &&
      !(std::find(present.begin(), present.end(), ch.survivor) != present.end()))
    fail(ErrorCode::InconsistentContainment,
         "survivor " + ch.survivor + " exists at a different level than the members");

  std::vector<CbgRecord> records = h.records();

  auto member = [&](const std::string& id) {
    return std::find(present.begin(), present.end(), id) != present.end();
  };

  if (level == ChangeLevel::Cbg) {
    std::optional<Parents> parents;
    double lat_sum = 0, lon_sum = 0;
    int centroid_n = 0;
    if (survivor_exists) {
      const auto& r = records[static_cast<std::size_t>(h.cbg_index(ch.survivor))];
      parents = Parents{r.tract_id, r.county_id, r.state_id};
    }
    std::vector<CbgRecord> out;
    out.reserve(records.size());
    for (auto& r : records) {
      if (r.cbg_id != ch.survivor && !member(r.cbg_id)) {
        out.push_back(std::move(r));
        continue;
      }
      if (!parents) {
        parents = Parents{r.tract_id, r.county_id, r.state_id};
      } else if (!survivor_exists &&
                 (r.tract_id != parents->tract || r.county_id != parents->county ||
                  r.state_id != parents->state)) {
        fail(ErrorCode::InconsistentContainment,
             "members of new cbg " + ch.survivor + " disagree on containment");
      }
      if (std::isfinite(r.lat) && std::isfinite(r.lon)) {
        lat_sum += r.lat;
        lon_sum += r.lon;
        ++centroid_n;
      }
    }
    CbgRecord merged;
    merged.cbg_id = ch.survivor;
    merged.tract_id = parents->tract;
    merged.county_id = parents->county;
    merged.state_id = parents->state;
    if (survivor_exists) {
      const auto& r = h.records()[static_cast<std::size_t>(h.cbg_index(ch.survivor))];
      merged.lat = r.lat;
      merged.lon = r.lon;
    } else if (centroid_n > 0) {
      merged.lat = lat_sum / centroid_n;
      merged.lon = lon_sum / centroid_n;
    }
    out.push_back(std::move(merged));
    return GeoHierarchy::build(std::move(out));
  }

  if (level == ChangeLevel::Tract) {
    std::optional<Parents> parents;
    if (survivor_exists) {
      for (const auto& r : records)
        if (r.tract_id == ch.survivor) {
          parents = Parents{ch.survivor, r.county_id, r.state_id};
          break;
        }
    }
    for (auto& r : records) {
      if (!member(r.tract_id)) continue;
      if (!parents) parents = Parents{ch.survivor, r.county_id, r.state_id};
      else if (!survivor_exists && r.county_id != parents->county)
        fail(ErrorCode::InconsistentContainment,
             "members of new tract " + ch.survivor + " span counties");
      r.tract_id = ch.survivor;
      // Merging into an existing tract adopts its containment.
      r.county_id = parents->county;
      r.state_id = parents->state;
    }
    return GeoHierarchy::build(std::move(records));
  }

  // County level.
  std::optional<std::string> state;
  if (survivor_exists) {
    for (const auto& r : records)
      if (r.county_id == ch.survivor) {
        state = r.state_id;
        break;
      }
  }
  for (auto& r : records) {
    if (!member(r.county_id)) continue;
    if (!state) state = r.state_id;
    else if (!survivor_exists && r.state_id != *state)
      fail(ErrorCode::InconsistentContainment,
           "members of new county " + ch.survivor + " span states");
    r.county_id = ch.survivor;
    r.state_id = *state;
  }
  return GeoHierarchy::build(std::move(records));
}

}  // namespace

GeoHierarchy apply_geography_changes(const GeoHierarchy& h,
                                     const std::vector<GeographyChange>& changes) {
  GeoHierarchy out = h;
  for (const auto& ch : changes) out = apply_one(out, ch);
  return out;
}

std::unordered_map<std::string, std::string> resolve_renames(
    const std::vector<GeographyChange>& changes) {
  std::unordered_map<std::string, std::string> rename;
  for (const auto& ch : changes)
    for (const auto& m : ch.members)
      if (m != ch.survivor) rename[m] = ch.survivor;
  // Chase chains (A->B, B->C) to the final survivor.
  std::unordered_map<std::string, std::string> out;
  for (const auto& [from, to] : rename) {
    std::string cur = to;
    std::size_t guard = 0;
    for (auto it = rename.find(cur); it != rename.end(); it = rename.find(cur)) {
      cur = it->second;
      if (++guard > rename.size())
        fail(ErrorCode::InconsistentContainment, "rename cycle through " + from);
    }
    out[from] = cur;
  }
  return out;
}

double aggregate_moe(std::span<const double> moes) {
  double ss = 0.0;
  for (double m : moes) ss += m * m;
  return std::sqrt(ss);
}

double haversine_miles(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kEarthRadiusMiles = 3958.7613;
  constexpr double kDeg = std::numbers::pi / 180.0;
  double phi1 = lat1 * kDeg, phi2 = lat2 * kDeg;
  double dphi = (lat2 - lat1) * kDeg, dlam = (lon2 - lon1) * kDeg;
  double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
             std::cos(phi1) * std::cos(phi2) * std::sin(dlam / 2) * std::sin(dlam / 2);
  return 2.0 * kEarthRadiusMiles * std::asin(std::min(1.0, std::sqrt(a)));
}

}  // namespace migrate
