#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "migrate/analytics.hpp"
#include "migrate/constraints.hpp"
#include "migrate/crosswalk.hpp"
#include "migrate/flow_matrix.hpp"
#include "migrate/geo.hpp"
#include "migrate/harmonizer.hpp"
#include "migrate/records.hpp"
#include "migrate/validator.hpp"

namespace migrate {

// Minimal CSV: comma-separated, no quoting (ids never contain commas), '#'
// lines are comments.  The first non-comment line is the header.
struct CsvTable {
  std::string path;
  std::vector<std::string> comments;  // leading '#' lines, stripped of '#'
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by name; fails with BadFormat when absent.
  std::size_t column(std::string_view name) const;
};

CsvTable read_csv(const std::string& path);

double parse_double(std::string_view text, const std::string& context);
int parse_int(std::string_view text, const std::string& context);

// 17 significant digits, enough to round-trip a double exactly.
std::string format_double(double v);

// --- geography ---------------------------------------------------------
// cbg_id,tract_id,county_id,state_id,lat,lon (lat/lon may be empty)
GeoHierarchy read_hierarchy_csv(const std::string& path);
// year,kind,survivor,member (one member per row; rows sharing
// (year,kind,survivor) form one change, in file order)
std::vector<GeographyChange> read_changes_csv(const std::string& path);

// --- records ------------------------------------------------------------
// person_id,address_id,kind,effective_date,first_seen,last_seen
std::vector<PersonRecord> read_records_csv(const std::string& path);

// --- matrices -----------------------------------------------------------
// Triplet CSV sorted by (origin, dest) with a "# year=<t> n=<dim>" comment;
// values carry 17 significant digits so round-trips are bit-stable.
void write_flow_matrix_csv(const std::string& path, const FlowMatrix& m,
                           const std::vector<std::string>& ids);
FlowMatrix read_flow_matrix_csv(const std::string& path, const GeoHierarchy& h);
void write_address_matrix_csv(const std::string& path, const AddressMatrix& m);
AddressMatrix read_address_matrix_csv(const std::string& path);

// --- crosswalk ----------------------------------------------------------
// address_id,cbg_id
std::vector<std::pair<std::string, std::string>> read_exact_assignments_csv(
    const std::string& path);
// address_id,zip,tract_id,weight (rows per address grouped by id)
std::vector<ZipAssignment> read_zip_assignments_csv(const std::string& path);
// cbg_id,population
std::unordered_map<std::string, double> read_cbg_population_csv(const std::string& path);

// --- constraints ----------------------------------------------------------
struct ConstraintPaths {
  std::string cbg_pops;       // cbg_id,window,value,moe
  std::string state_margins;  // year,state_id,population,stayers
  std::string state_flows;    // year,origin_state,dest_state,flow
  std::string county_pops;    // year,county_id,population
  std::string components;     // optional: year,level,area_id,births,deaths,net_international,immigrants
};

// Assembles the constraint set for one year.  county_pops must cover year-1
// and year.  When a components file is given the set is adjusted.
ConstraintSet read_constraints(const ConstraintPaths& paths, int year, const GeoHierarchy& h);

ComponentsOfChange read_components_csv(const std::string& path, int year, const GeoHierarchy& h);

// --- categories and analytics output -------------------------------------
// cbg_id,plurality_race,urban,median_income
CbgCategories read_categories_csv(const std::string& path, const GeoHierarchy& h);

// metric,level,weighted,year,value
void write_metric_csv(const std::string& path, const std::vector<MetricRow>& rows, bool append);

// statistic,stratum,bucket,year,value (plot-ready long format)
struct LongRow {
  std::string statistic;
  std::string stratum;
  std::string bucket;
  int year = 0;
  double value = 0.0;
};
void write_long_csv(const std::string& path, const std::vector<LongRow>& rows);

// One JSON record per stage / IPF iteration.
void write_run_report_jsonl(const std::string& path, const HarmonizeReport& report);

// FNV-1a digest of a file's bytes, for run manifests.
std::uint64_t file_digest(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace migrate
