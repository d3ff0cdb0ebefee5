#include "migrate/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace migrate {

namespace {

std::optional<YearMonth> parse_optional_month(const std::string& text) {
  if (text.empty()) return std::nullopt;
  return YearMonth::parse(text);
}

// "key=value" tokens out of a "# year=2015 n=216" comment.
std::map<std::string, std::string> parse_comment_pairs(const std::vector<std::string>& comments) {
  std::map<std::string, std::string> out;
  for (const auto& c : comments) {
    std::istringstream ss(c);
    std::string token;
    while (ss >> token) {
      std::size_t eq = token.find('=');
      if (eq != std::string::npos) out[token.substr(0, eq)] = token.substr(eq + 1);
    }
  }
  return out;
}

}  // namespace

GeoHierarchy read_hierarchy_csv(const std::string& path) {
  CsvTable t = read_csv(path);
  std::size_t cbg = t.column("cbg_id"), tract = t.column("tract_id");
  std::size_t county = t.column("county_id"), state = t.column("state_id");
  std::size_t lat = t.column("lat"), lon = t.column("lon");
  std::vector<CbgRecord> records;
  records.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    CbgRecord r;
    r.cbg_id = row[cbg];
    r.tract_id = row[tract];
    r.county_id = row[county];
    r.state_id = row[state];
    if (!row[lat].empty()) r.lat = parse_double(row[lat], path);
    if (!row[lon].empty()) r.lon = parse_double(row[lon], path);
    records.push_back(std::move(r));
  }
  return GeoHierarchy::build(std::move(records));
}

std::vector<GeographyChange> read_changes_csv(const std::string& path) {
  CsvTable t = read_csv(path);
  std::size_t year = t.column("year"), kind = t.column("kind");
  std::size_t survivor = t.column("survivor"), member = t.column("member");
  std::vector<GeographyChange> out;
  for (const auto& row : t.rows) {
    GeographyChange::Kind k;
    if (row[kind] == "merge") k = GeographyChange::Kind::Merge;
    else if (row[kind] == "split") k = GeographyChange::Kind::Split;
    else fail(ErrorCode::BadFormat, path + ": change kind '" + row[kind] + "'");
    int y = parse_int(row[year], path);
    if (!out.empty() && out.back().year == y && out.back().kind == k &&
        out.back().survivor == row[survivor]) {
      out.back().members.push_back(row[member]);
    } else {
      out.push_back({y, k, row[survivor], {row[member]}});
    }
  }
  return out;
}

std::vector<PersonRecord> read_records_csv(const std::string& path) {
  CsvTable t = read_csv(path);
  std::size_t person = t.column("person_id"), address = t.column("address_id");
  std::size_t kind = t.column("kind"), eff = t.column("effective_date");
  std::size_t first = t.column("first_seen"), last = t.column("last_seen");
  std::vector<PersonRecord> out;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& row : t.rows) {
    auto [it, inserted] = index.try_emplace(row[person], out.size());
    if (inserted) {
      PersonRecord r;
      r.person_id = row[person];
      out.push_back(std::move(r));
    }
    PersonRecord& r = out[it->second];
    AddressEntry a;
    a.address_id = row[address];
    a.kind = parse_address_kind(row[kind]);
    a.effective_date = parse_optional_month(row[eff]);
    r.addresses.push_back(std::move(a));
    // Repeated per-person fields: first non-empty value wins.
    if (!r.first_seen) r.first_seen = parse_optional_month(row[first]);
    if (!r.last_seen) r.last_seen = parse_optional_month(row[last]);
  }
  return out;
}

namespace {

void write_triplets_csv(const std::string& path, const SparseRowMatrix& m, int year,
                        const std::vector<std::string>& ids, const char* origin_col,
                        const char* dest_col) {
  if (static_cast<Eigen::Index>(ids.size()) != m.rows())
    fail(ErrorCode::LengthMismatch, "id list does not match matrix dimension");
  std::ostringstream out;
  out << "# year=" << year << " n=" << m.rows() << "\n";
  out << origin_col << ',' << dest_col << ",value\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (SparseRowMatrix::InnerIterator it(m, i); it; ++it)
      out << ids[static_cast<std::size_t>(i)] << ',' << ids[static_cast<std::size_t>(it.col())]
          << ',' << format_double(it.value()) << "\n";
  write_text_file(path, out.str());
}

}  // namespace

void write_flow_matrix_csv(const std::string& path, const FlowMatrix& m,
                           const std::vector<std::string>& ids) {
  write_triplets_csv(path, m.storage(), m.year(), ids, "origin_cbg", "dest_cbg");
}

FlowMatrix read_flow_matrix_csv(const std::string& path, const GeoHierarchy& h) {
  CsvTable t = read_csv(path);
  auto meta = parse_comment_pairs(t.comments);
  if (!meta.count("year") || !meta.count("n"))
    fail(ErrorCode::BadFormat, path + ": missing '# year=<t> n=<dim>' comment");
  int year = parse_int(meta["year"], path);
  Eigen::Index n = parse_int(meta["n"], path);
  if (n != h.cbg_count())
    fail(ErrorCode::DimensionMismatch, path + ": matrix over " + std::to_string(n) +
                                           " cbgs, hierarchy has " +
                                           std::to_string(h.cbg_count()));
  std::size_t origin = t.column("origin_cbg"), dest = t.column("dest_cbg");
  std::size_t value = t.column("value");
  std::vector<Eigen::Triplet<double>> ts;
  ts.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    Eigen::Index i = h.cbg_index(row[origin]);
    Eigen::Index j = h.cbg_index(row[dest]);
    if (i < 0) fail(ErrorCode::UnknownArea, path + ": cbg " + row[origin]);
    if (j < 0) fail(ErrorCode::UnknownArea, path + ": cbg " + row[dest]);
    ts.emplace_back(static_cast<int>(i), static_cast<int>(j), parse_double(row[value], path));
  }
  return FlowMatrix::from_triplets(h.cbg_count(), year, ts);
}

void write_address_matrix_csv(const std::string& path, const AddressMatrix& m) {
  write_triplets_csv(path, m.flows, m.year, m.address_ids, "origin", "dest");
}

AddressMatrix read_address_matrix_csv(const std::string& path) {
  CsvTable t = read_csv(path);
  auto meta = parse_comment_pairs(t.comments);
  if (!meta.count("year") || !meta.count("n"))
    fail(ErrorCode::BadFormat, path + ": missing '# year=<t> n=<dim>' comment");
  AddressMatrix out;
  out.year = parse_int(meta["year"], path);
  Eigen::Index n = parse_int(meta["n"], path);
  std::size_t origin = t.column("origin"), dest = t.column("dest"), value = t.column("value");
  std::set<std::string> ids;
  for (const auto& row : t.rows) {
    ids.insert(row[origin]);
    ids.insert(row[dest]);
  }
  out.address_ids.assign(ids.begin(), ids.end());
  if (static_cast<Eigen::Index>(out.address_ids.size()) != n)
    fail(ErrorCode::DimensionMismatch,
         path + ": header says n=" + std::to_string(n) + ", file has " +
             std::to_string(out.address_ids.size()) + " distinct addresses");
  std::vector<Eigen::Triplet<double>> ts;
  ts.reserve(t.rows.size());
  for (const auto& row : t.rows)
    ts.emplace_back(static_cast<int>(out.address_index(row[origin])),
                    static_cast<int>(out.address_index(row[dest])),
                    parse_double(row[value], path));
  out.flows.resize(n, n);
  out.flows.setFromTriplets(ts.begin(), ts.end());
  out.flows.makeCompressed();
  return out;
}

std::vector<std::pair<std::string, std::string>> read_exact_assignments_csv(
    const std::string& path) {
  CsvTable t = read_csv(path);
  std::size_t address = t.column("address_id"), cbg = t.column("cbg_id");
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) out.emplace_back(row[address], row[cbg]);
  return out;
}

std::vector<ZipAssignment> read_zip_assignments_csv(const std::string& path) {
  CsvTable t = read_csv(path);
  std::size_t address = t.column("address_id"), zip = t.column("zip");
  std::size_t tract = t.column("tract_id"), weight = t.column("weight");
  std::vector<ZipAssignment> out;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& row : t.rows) {
    auto [it, inserted] = index.try_emplace(row[address], out.size());
    if (inserted) out.push_back({row[address], row[zip], {}});
    out[it->second].tract_weights.emplace_back(row[tract], parse_double(row[weight], path));
  }
  return out;
}

std::unordered_map<std::string, double> read_cbg_population_csv(const std::string& path) {
  CsvTable t = read_csv(path);
  std::size_t cbg = t.column("cbg_id"), pop = t.column("population");
  std::unordered_map<std::string, double> out;
  for (const auto& row : t.rows) out[row[cbg]] = parse_double(row[pop], path);
  return out;
}

ComponentsOfChange read_components_csv(const std::string& path, int year, const GeoHierarchy& h) {
  CsvTable t = read_csv(path);
  std::size_t yc = t.column("year"), level = t.column("level"), area = t.column("area_id");
  std::size_t births = t.column("births"), deaths = t.column("deaths");
  std::size_t net = t.column("net_international"), imm = t.column("immigrants");
  ComponentsOfChange out;
  out.county_births = Eigen::VectorXd::Zero(h.county_count());
  out.county_deaths = Eigen::VectorXd::Zero(h.county_count());
  out.county_net_intl = Eigen::VectorXd::Zero(h.county_count());
  out.state_births = Eigen::VectorXd::Zero(h.state_count());
  out.state_deaths = Eigen::VectorXd::Zero(h.state_count());
  out.state_net_intl = Eigen::VectorXd::Zero(h.state_count());
  out.state_immigrants = Eigen::VectorXd::Zero(h.state_count());
  std::vector<bool> have_county(static_cast<std::size_t>(h.county_count()), false);
  std::vector<bool> have_state(static_cast<std::size_t>(h.state_count()), false);
  for (const auto& row : t.rows) {
    if (parse_int(row[yc], path) != year) continue;
    if (row[level] == "county") {
      int c = h.county_index(row[area]);
      if (c < 0) fail(ErrorCode::UnknownArea, path + ": county " + row[area]);
      out.county_births[c] = parse_double(row[births], path);
      out.county_deaths[c] = parse_double(row[deaths], path);
      out.county_net_intl[c] = parse_double(row[net], path);
      have_county[static_cast<std::size_t>(c)] = true;
    } else if (row[level] == "state") {
      int s = h.state_index(row[area]);
      if (s < 0) fail(ErrorCode::UnknownArea, path + ": state " + row[area]);
      out.state_births[s] = parse_double(row[births], path);
      out.state_deaths[s] = parse_double(row[deaths], path);
      out.state_net_intl[s] = parse_double(row[net], path);
      out.state_immigrants[s] = row[imm].empty() ? 0.0 : parse_double(row[imm], path);
      have_state[static_cast<std::size_t>(s)] = true;
    } else {
      fail(ErrorCode::BadFormat, path + ": component level '" + row[level] + "'");
    }
  }
  for (int c = 0; c < h.county_count(); ++c)
    if (!have_county[static_cast<std::size_t>(c)])
      fail(ErrorCode::MissingComponent, path + ": no " + std::to_string(year) +
                                            " components for county " +
                                            h.county_ids()[static_cast<std::size_t>(c)]);
  for (int s = 0; s < h.state_count(); ++s)
    if (!have_state[static_cast<std::size_t>(s)])
      fail(ErrorCode::MissingComponent, path + ": no " + std::to_string(year) +
                                            " components for state " +
                                            h.state_ids()[static_cast<std::size_t>(s)]);
  return out;
}

ConstraintSet read_constraints(const ConstraintPaths& paths, int year, const GeoHierarchy& h) {
  ConstraintSet c;
  c.year = year;

  if (!paths.cbg_pops.empty()) {
    CsvTable t = read_csv(paths.cbg_pops);
    std::size_t cbg = t.column("cbg_id"), window = t.column("window");
    std::size_t value = t.column("value"), moe = t.column("moe");
    c.cbg_obs_values = Eigen::MatrixXd::Zero(kObsWindows, h.cbg_count());
    c.cbg_obs_moe = Eigen::MatrixXd::Zero(kObsWindows, h.cbg_count());
    for (const auto& row : t.rows) {
      Eigen::Index i = h.cbg_index(row[cbg]);
      if (i < 0) fail(ErrorCode::UnknownArea, paths.cbg_pops + ": cbg " + row[cbg]);
      int w = obs_window_index(row[window]);
      if (w < 0) fail(ErrorCode::BadFormat, paths.cbg_pops + ": window '" + row[window] + "'");
      c.cbg_obs_values(w, i) = parse_double(row[value], paths.cbg_pops);
      c.cbg_obs_moe(w, i) = row[moe].empty() ? 0.0 : parse_double(row[moe], paths.cbg_pops);
    }
  }

  {
    CsvTable t = read_csv(paths.state_margins);
    std::size_t yc = t.column("year"), state = t.column("state_id");
    std::size_t pop = t.column("population"), stay = t.column("stayers");
    c.state_pops = Eigen::VectorXd::Zero(h.state_count());
    c.state_stayers = Eigen::VectorXd::Zero(h.state_count());
    std::vector<bool> have(static_cast<std::size_t>(h.state_count()), false);
    for (const auto& row : t.rows) {
      if (parse_int(row[yc], paths.state_margins) != year) continue;
      int s = h.state_index(row[state]);
      if (s < 0) fail(ErrorCode::UnknownArea, paths.state_margins + ": state " + row[state]);
      c.state_pops[s] = parse_double(row[pop], paths.state_margins);
      c.state_stayers[s] = parse_double(row[stay], paths.state_margins);
      have[static_cast<std::size_t>(s)] = true;
    }
    for (int s = 0; s < h.state_count(); ++s)
      if (!have[static_cast<std::size_t>(s)])
        fail(ErrorCode::UnknownArea, paths.state_margins + ": no " + std::to_string(year) +
                                         " margins for state " +
                                         h.state_ids()[static_cast<std::size_t>(s)]);
  }

  {
    CsvTable t = read_csv(paths.state_flows);
    std::size_t yc = t.column("year"), origin = t.column("origin_state");
    std::size_t dest = t.column("dest_state"), flow = t.column("flow");
    c.state_flows = Eigen::MatrixXd::Zero(h.state_count(), h.state_count());
    for (const auto& row : t.rows) {
      if (parse_int(row[yc], paths.state_flows) != year) continue;
      int r = h.state_index(row[origin]);
      int s = h.state_index(row[dest]);
      if (r < 0) fail(ErrorCode::UnknownArea, paths.state_flows + ": state " + row[origin]);
      if (s < 0) fail(ErrorCode::UnknownArea, paths.state_flows + ": state " + row[dest]);
      c.state_flows(r, s) = parse_double(row[flow], paths.state_flows);
    }
  }

  {
    CsvTable t = read_csv(paths.county_pops);
    std::size_t yc = t.column("year"), county = t.column("county_id");
    std::size_t pop = t.column("population");
    c.county_pops_prev = Eigen::VectorXd::Zero(h.county_count());
    c.county_pops_curr = Eigen::VectorXd::Zero(h.county_count());
    std::vector<bool> have_prev(static_cast<std::size_t>(h.county_count()), false);
    std::vector<bool> have_curr(static_cast<std::size_t>(h.county_count()), false);
    for (const auto& row : t.rows) {
      int y = parse_int(row[yc], paths.county_pops);
      if (y != year && y != year - 1) continue;
      int k = h.county_index(row[county]);
      if (k < 0) fail(ErrorCode::UnknownArea, paths.county_pops + ": county " + row[county]);
      double v = parse_double(row[pop], paths.county_pops);
      if (y == year - 1) {
        c.county_pops_prev[k] = v;
        have_prev[static_cast<std::size_t>(k)] = true;
      } else {
        c.county_pops_curr[k] = v;
        have_curr[static_cast<std::size_t>(k)] = true;
      }
    }
    for (int k = 0; k < h.county_count(); ++k)
      if (!have_prev[static_cast<std::size_t>(k)] || !have_curr[static_cast<std::size_t>(k)])
        fail(ErrorCode::UnknownArea, paths.county_pops + ": county " +
                                         h.county_ids()[static_cast<std::size_t>(k)] +
                                         " missing a population for " + std::to_string(year - 1) +
                                         " or " + std::to_string(year));
  }

  if (!paths.components.empty()) {
    ComponentsOfChange comp = read_components_csv(paths.components, year, h);
    c = adjust_constraints(std::move(c), comp);
  }
  return c;
}

CbgCategories read_categories_csv(const std::string& path, const GeoHierarchy& h) {
  CsvTable t = read_csv(path);
  std::size_t cbg = t.column("cbg_id"), race = t.column("plurality_race");
  std::size_t urban = t.column("urban"), income = t.column("median_income");
  Eigen::Index n = h.cbg_count();
  std::vector<RaceCategory> races(static_cast<std::size_t>(n), RaceCategory::Other);
  std::vector<char> urbans(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd incomes = Eigen::VectorXd::Zero(n);
  std::vector<bool> have(static_cast<std::size_t>(n), false);
  for (const auto& row : t.rows) {
    Eigen::Index i = h.cbg_index(row[cbg]);
    if (i < 0) fail(ErrorCode::UnknownArea, path + ": cbg " + row[cbg]);
    races[static_cast<std::size_t>(i)] = parse_race(row[race]);
    if (row[urban] == "1" || row[urban] == "true") urbans[static_cast<std::size_t>(i)] = 1;
    else if (row[urban] == "0" || row[urban] == "false") urbans[static_cast<std::size_t>(i)] = 0;
    else fail(ErrorCode::BadFormat, path + ": urban flag '" + row[urban] + "'");
    incomes[i] = parse_double(row[income], path);
    have[static_cast<std::size_t>(i)] = true;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    if (!have[static_cast<std::size_t>(i)])
      fail(ErrorCode::UnknownArea,
           path + ": no categories for cbg " + h.cbg_ids()[static_cast<std::size_t>(i)]);
  return assign_categories(std::move(races), std::move(urbans), std::move(incomes));
}

void write_metric_csv(const std::string& path, const std::vector<MetricRow>& rows, bool append) {
  std::ostringstream out;
  bool write_header = true;
  if (append) {
    std::ifstream probe(path);
    write_header = !probe.good();
  }
  if (write_header) out << "metric,level,weighted,year,value\n";
  for (const auto& r : rows) {
    out << r.metric << ',' << r.level << ',' << (r.weighted ? 1 : 0) << ',' << r.year << ',';
    if (std::isnan(r.value))
      out << "\n";  // missing
    else
      out << format_double(r.value) << "\n";
  }
  std::ofstream f(path, append ? std::ios::app | std::ios::binary : std::ios::binary);
  if (!f) fail(ErrorCode::IoFailure, "cannot write " + path);
  f << out.str();
}

void write_long_csv(const std::string& path, const std::vector<LongRow>& rows) {
  std::ostringstream out;
  out << "statistic,stratum,bucket,year,value\n";
  for (const auto& r : rows) {
    out << r.statistic << ',' << r.stratum << ',' << r.bucket << ',' << r.year << ',';
    if (std::isnan(r.value))
      out << "\n";
    else
      out << format_double(r.value) << "\n";
  }
  write_text_file(path, out.str());
}

void write_run_report_jsonl(const std::string& path, const HarmonizeReport& report) {
  using nlohmann::json;
  std::ostringstream out;
  auto skipped_json = [](const std::vector<SkippedBlock>& blocks) {
    json arr = json::array();
    for (const auto& b : blocks)
      arr.push_back({{"stage", b.stage},
                     {"block", b.block},
                     {"target", b.target},
                     {"source", b.source}});
    return arr;
  };
  // One-shot stages grouped by stage label.
  std::map<std::string, std::vector<SkippedBlock>> stages;
  for (const auto& b : report.skipped) stages[b.stage].push_back(b);
  for (const char* stage : {"cbg_rows", "state_stayers", "state_movers", "state_flows"}) {
    json rec = {{"stage", stage},
                {"iteration", 0},
                {"l1", nullptr},
                {"max_violation", nullptr},
                {"skipped", skipped_json(stages.count(stage) ? stages[stage]
                                                             : std::vector<SkippedBlock>{})}};
    out << rec.dump() << "\n";
  }
  for (std::size_t i = 0; i < report.ipf.l1_trace.size(); ++i) {
    json rec = {{"stage", "county_ipf"},
                {"iteration", static_cast<int>(i + 1)},
                {"l1", report.ipf.l1_trace[i]},
                {"max_violation", nullptr},
                {"skipped", json::array()}};
    out << rec.dump() << "\n";
  }
  json final_rec = {{"stage", "county_ipf_final"},
                    {"iteration", report.ipf.iterations},
                    {"l1", report.ipf.l1_trace.empty() ? json(nullptr)
                                                       : json(report.ipf.l1_trace.back())},
                    {"max_violation",
                     std::max(report.ipf.max_row_violation, report.ipf.max_col_violation)},
                    {"converged", report.ipf.converged},
                    {"skipped", skipped_json(report.ipf.skipped)}};
  out << final_rec.dump() << "\n";
  write_text_file(path, out.str());
}

}  // namespace migrate
