// Batch front end for the fusion pipeline.  One JSON config drives every
// subcommand; --set key=value flags override single fields.  Exit codes:
// 0 success, 2 bad input or config, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "migrate/analytics.hpp"
#include "migrate/constraints.hpp"
#include "migrate/crosswalk.hpp"
#include "migrate/error.hpp"
#include "migrate/flow_matrix.hpp"
#include "migrate/geo.hpp"
#include "migrate/harmonizer.hpp"
#include "migrate/io.hpp"
#include "migrate/parallel.hpp"
#include "migrate/population_path.hpp"
#include "migrate/records.hpp"
#include "migrate/rng.hpp"
#include "migrate/synthgen.hpp"
#include "migrate/validator.hpp"

namespace {

using json = nlohmann::json;
using namespace migrate;

// --- config --------------------------------------------------------------

json::json_pointer to_pointer(const std::string& dotted) {
  std::string p;
  p.reserve(dotted.size() + 1);
  p.push_back('/');
  for (char c : dotted) p.push_back(c == '.' ? '/' : c);
  return json::json_pointer(p);
}

void apply_override(json& cfg, const std::string& kv) {
  std::size_t eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    fail(ErrorCode::BadConfig, "--set expects key=value, got '" + kv + "'");
  std::string key = kv.substr(0, eq);
  std::string raw = kv.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;  // unquoted strings pass through
  cfg[to_pointer(key)] = value;
}

json load_config(const std::string& path, const std::vector<std::string>& sets) {
  json cfg = json::parse(read_text_file(path), nullptr, false);
  if (cfg.is_discarded() || !cfg.is_object())
    fail(ErrorCode::BadConfig, path + ": config must be a JSON object");
  for (const auto& kv : sets) apply_override(cfg, kv);
  return cfg;
}

const json* find(const json& cfg, const std::string& dotted) {
  json::json_pointer p = to_pointer(dotted);
  if (!cfg.contains(p)) return nullptr;
  return &cfg.at(p);
}

std::string need_str(const json& cfg, const std::string& key) {
  const json* v = find(cfg, key);
  if (!v || !v->is_string())
    fail(ErrorCode::BadConfig, "config needs string field '" + key + "'");
  return v->get<std::string>();
}

std::string opt_str(const json& cfg, const std::string& key, const std::string& def = "") {
  const json* v = find(cfg, key);
  if (!v) return def;
  if (!v->is_string()) fail(ErrorCode::BadConfig, "config field '" + key + "' must be a string");
  return v->get<std::string>();
}

int need_int(const json& cfg, const std::string& key) {
  const json* v = find(cfg, key);
  if (!v || !v->is_number_integer())
    fail(ErrorCode::BadConfig, "config needs integer field '" + key + "'");
  return v->get<int>();
}

int opt_int(const json& cfg, const std::string& key, int def) {
  const json* v = find(cfg, key);
  if (!v) return def;
  if (!v->is_number_integer())
    fail(ErrorCode::BadConfig, "config field '" + key + "' must be an integer");
  return v->get<int>();
}

double opt_num(const json& cfg, const std::string& key, double def) {
  const json* v = find(cfg, key);
  if (!v) return def;
  if (!v->is_number()) fail(ErrorCode::BadConfig, "config field '" + key + "' must be a number");
  return v->get<double>();
}

bool opt_bool(const json& cfg, const std::string& key, bool def) {
  const json* v = find(cfg, key);
  if (!v) return def;
  if (!v->is_boolean()) fail(ErrorCode::BadConfig, "config field '" + key + "' must be a bool");
  return v->get<bool>();
}

std::vector<double> opt_num_list(const json& cfg, const std::string& key,
                                 std::vector<double> def) {
  const json* v = find(cfg, key);
  if (!v) return def;
  if (!v->is_array()) fail(ErrorCode::BadConfig, "config field '" + key + "' must be an array");
  std::vector<double> out;
  for (const auto& e : *v) {
    if (!e.is_number())
      fail(ErrorCode::BadConfig, "config field '" + key + "' must hold numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::uint64_t config_seed(const json& cfg) {
  const json* v = find(cfg, "seed");
  if (!v || !v->is_number_unsigned())
    fail(ErrorCode::BadConfig, "config needs non-negative integer field 'seed'");
  return v->get<std::uint64_t>();
}

std::string output_dir(const json& cfg) {
  std::string dir = need_str(cfg, "output_dir");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoFailure, "cannot create output directory " + dir);
  return dir;
}

// --- manifest --------------------------------------------------------------

struct Manifest {
  json inputs = json::array();
  json outputs = json::array();
  json extra = json::object();

  void input(const std::string& path) {
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(file_digest(path)));
    inputs.push_back({{"path", path}, {"digest", hex}});
  }
  void output(const std::string& path) { outputs.push_back(path); }

  void write(const std::string& dir, const std::string& subcommand, const json& cfg) const {
    json m = {{"subcommand", subcommand}, {"config", cfg},       {"inputs", inputs},
              {"outputs", outputs},       {"threads", worker_count()}};
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    write_text_file(dir + "/manifest.json", m.dump(2) + "\n");
  }
};

// --- shared loaders --------------------------------------------------------

GeoHierarchy load_hierarchy(const json& cfg, Manifest& man) {
  std::string path = need_str(cfg, "paths.hierarchy");
  man.input(path);
  GeoHierarchy h = read_hierarchy_csv(path);
  std::string changes = opt_str(cfg, "paths.changes");
  if (!changes.empty()) {
    man.input(changes);
    h = apply_geography_changes(h, read_changes_csv(changes));
  }
  return h;
}

FlowMatrix load_flow_matrix(const json& cfg, const std::string& key, const GeoHierarchy& h,
                            Manifest& man) {
  std::string path = need_str(cfg, key);
  man.input(path);
  return read_flow_matrix_csv(path, h);
}

HarmonizeOptions harmonize_options(const json& cfg) {
  HarmonizeOptions o;
  o.cbg_stage = opt_bool(cfg, "harmonize.cbg_stage", o.cbg_stage);
  o.state_margin_stage = opt_bool(cfg, "harmonize.state_margin_stage", o.state_margin_stage);
  o.state_flow_stage = opt_bool(cfg, "harmonize.state_flow_stage", o.state_flow_stage);
  o.county_ipf_stage = opt_bool(cfg, "harmonize.county_ipf_stage", o.county_ipf_stage);
  o.ipf_max_iterations = opt_int(cfg, "harmonize.ipf_max_iterations", o.ipf_max_iterations);
  o.ipf_tolerance = opt_num(cfg, "harmonize.ipf_tolerance", o.ipf_tolerance);
  return o;
}

// --- subcommands -------------------------------------------------------------

void run_process_records(const json& cfg) {
  std::string dir = output_dir(cfg);
  Manifest man;
  std::string records_path = need_str(cfg, "paths.records");
  man.input(records_path);
  std::vector<PersonRecord> records = read_records_csv(records_path);
  if (records.empty()) fail(ErrorCode::EmptyAfterCleaning, records_path + ": no person records");
  int first_year = need_int(cfg, "first_year");
  int last_year = need_int(cfg, "last_year");
  std::vector<AddressMatrix> mats = build_address_matrices(records, first_year, last_year);
  for (const AddressMatrix& m : mats) {
    std::string path = dir + "/address_flows_" + std::to_string(m.year) + ".csv";
    write_address_matrix_csv(path, m);
    man.output(path);
  }
  man.extra["persons"] = records.size();
  man.write(dir, "process-records", cfg);
}

void run_harmonize(const json& cfg) {
  std::string dir = output_dir(cfg);
  Manifest man;
  GeoHierarchy h = load_hierarchy(cfg, man);
  int year = need_int(cfg, "year");

  FlowMatrix raw(h.cbg_count(), year);
  if (find(cfg, "paths.flow_matrix")) {
    raw = load_flow_matrix(cfg, "paths.flow_matrix", h, man);
    if (raw.year() != year)
      fail(ErrorCode::BadConfig, "flow matrix is for year " + std::to_string(raw.year()) +
                                     ", config says " + std::to_string(year));
  } else {
    std::string records_path = need_str(cfg, "paths.records");
    std::string exact_path = need_str(cfg, "paths.exact_assignments");
    man.input(records_path);
    man.input(exact_path);
    std::vector<ZipAssignment> fuzzy;
    std::unordered_map<std::string, double> cbg_pop;
    std::string zip_path = opt_str(cfg, "paths.zip_assignments");
    if (!zip_path.empty()) {
      man.input(zip_path);
      fuzzy = read_zip_assignments_csv(zip_path);
      std::string pop_path = opt_str(cfg, "paths.cbg_populations");
      if (!pop_path.empty()) {
        man.input(pop_path);
        cbg_pop = read_cbg_population_csv(pop_path);
      }
    }
    std::vector<PersonRecord> records = read_records_csv(records_path);
    std::vector<AddressMatrix> mats = build_address_matrices(records, year, year);
    CrosswalkMatrix xw =
        build_crosswalk(read_exact_assignments_csv(exact_path), fuzzy, cbg_pop, h);
    CrosswalkApplication app = apply_crosswalk(mats.front(), xw);
    raw = std::move(app.matrix);
    man.extra["dropped_addresses"] = app.dropped_addresses;
    man.extra["dropped_mass"] = app.dropped_mass;
  }

  ConstraintPaths cpaths;
  cpaths.cbg_pops = opt_str(cfg, "paths.cbg_obs");
  cpaths.state_margins = need_str(cfg, "paths.state_margins");
  cpaths.state_flows = need_str(cfg, "paths.state_flows");
  cpaths.county_pops = need_str(cfg, "paths.county_pops");
  cpaths.components = opt_str(cfg, "paths.components");
  if (!cpaths.cbg_pops.empty()) man.input(cpaths.cbg_pops);
  man.input(cpaths.state_margins);
  man.input(cpaths.state_flows);
  man.input(cpaths.county_pops);
  if (!cpaths.components.empty()) man.input(cpaths.components);
  ConstraintSet constraints = read_constraints(cpaths, year, h);

  HarmonizeOptions opts = harmonize_options(cfg);
  PopulationPaths paths = [&] {
    if (constraints.cbg_obs_values.size() > 0)
      return PopulationPaths::solve(constraints.cbg_obs_values);
    if (opts.cbg_stage)
      fail(ErrorCode::BadConfig,
           "harmonize.cbg_stage needs paths.cbg_obs (or disable the stage)");
    return PopulationPaths::from_values(Eigen::MatrixXd::Zero(h.cbg_count(), kPathYears));
  }();

  auto [fitted, report] = harmonize(std::move(raw), constraints, paths, h, opts);

  std::string matrix_path = dir + "/migrate_" + std::to_string(year) + ".csv";
  write_flow_matrix_csv(matrix_path, fitted, h.cbg_ids());
  man.output(matrix_path);
  std::string report_path = dir + "/run_report.jsonl";
  write_run_report_jsonl(report_path, report);
  man.output(report_path);
  man.extra["ipf_iterations"] = report.ipf.iterations;
  man.extra["ipf_converged"] = report.ipf.converged;
  man.extra["skipped_blocks"] = report.skipped.size() + report.ipf.skipped.size();
  man.write(dir, "harmonize", cfg);
}

void run_validate(const json& cfg) {
  std::string dir = output_dir(cfg);
  Manifest man;
  GeoHierarchy h = load_hierarchy(cfg, man);
  FlowMatrix estimate = load_flow_matrix(cfg, "paths.estimate", h, man);
  FlowMatrix truth = load_flow_matrix(cfg, "paths.truth", h, man);
  std::optional<FlowMatrix> baseline;
  if (find(cfg, "paths.baseline")) baseline = load_flow_matrix(cfg, "paths.baseline", h, man);
  double national_total = opt_num(cfg, "validate.national_total", 0.0);
  if (national_total > 0) estimate = national_rescale(std::move(estimate), national_total);

  std::vector<MetricRow> rows;
  const GeoLevel levels[] = {GeoLevel::Cbg, GeoLevel::Tract, GeoLevel::County, GeoLevel::State};
  for (GeoLevel level : levels) {
    BlockPartition p = h.partition(level);
    for (bool movers : {false, true}) {
      AlignedVectors v = vectorize_flows(estimate, truth, p, movers);
      std::string suffix = movers ? "_movers" : "_all";
      rows.push_back({"pearson" + suffix, p.label, false, truth.year(),
                      correlation(v.estimate, v.truth)});
      rows.push_back({"spearman" + suffix, p.label, false, truth.year(),
                      correlation(v.estimate, v.truth, nullptr, true)});
      rows.push_back(
          {"rmse" + suffix, p.label, false, truth.year(), rmse(v.estimate, v.truth)});
      if (baseline) {
        AlignedVectors b = vectorize_flows(*baseline, truth, p, movers);
        double reduction;
        try {
          reduction = rmse_reduction(b.estimate, v.estimate, v.truth);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::RawPerfect) throw;
          reduction = std::numeric_limits<double>::quiet_NaN();
        }
        rows.push_back({"rmse_reduction" + suffix, p.label, false, truth.year(), reduction});
      }
    }
  }
  std::string path = dir + "/metrics.csv";
  write_metric_csv(path, rows, false);
  man.output(path);
  man.write(dir, "validate", cfg);
}

void run_synth_eval(const json& cfg) {
  std::string dir = output_dir(cfg);
  Manifest man;
  std::uint64_t seed = config_seed(cfg);

  SyntheticWorldSpec ws;
  ws.states = opt_int(cfg, "synth.states", ws.states);
  ws.counties_per_state = opt_int(cfg, "synth.counties_per_state", ws.counties_per_state);
  ws.tracts_per_county = opt_int(cfg, "synth.tracts_per_county", ws.tracts_per_county);
  ws.cbgs_per_tract = opt_int(cfg, "synth.cbgs_per_tract", ws.cbgs_per_tract);
  ws.seed = seed;
  GravitySpec gs;
  gs.year = opt_int(cfg, "synth.year", gs.year);
  gs.total_population = opt_num(cfg, "synth.total_population", gs.total_population);
  gs.stay_rate = opt_num(cfg, "synth.stay_rate", gs.stay_rate);
  gs.gravity_exponent = opt_num(cfg, "synth.gravity_exponent", gs.gravity_exponent);
  gs.population_spread = opt_num(cfg, "synth.population_spread", gs.population_spread);
  gs.seed = seed;

  GeoHierarchy h = make_synthetic_hierarchy(ws);
  FlowMatrix truth = gen_ground_truth(h, gs);
  HarmonizeOptions opts = harmonize_options(cfg);
  Rng root(seed, "synth_eval");

  std::vector<double> taus = opt_num_list(cfg, "synth.taus", {0.05, 0.10, 0.20});
  int reps = opt_int(cfg, "synth.tau_seeds", 3);
  std::vector<LongRow> rows;
  char bucket[64];
  for (double tau : taus) {
    for (int rep = 0; rep < reps; ++rep) {
      std::snprintf(bucket, sizeof bucket, "tau=%g;rep=%d", tau, rep);
      PerturbationSpec ps;
      ps.family = PerturbationSpec::Family::Structured;
      ps.tau = tau;
      ps.seed = root.keyed(Rng::hash(bucket)).bits(0);
      RecoveryResult res = recovery_experiment(truth, h, ps, opts);
      for (const MetricRow& m : res.metrics)
        rows.push_back({m.metric + "_" + m.level, "structured", bucket, m.year, m.value});
    }
  }

  std::vector<double> bs = opt_num_list(cfg, "synth.bias_b", {0.0, 0.05, 0.10});
  std::vector<double> sigmas = opt_num_list(cfg, "synth.bias_sigma", {0.05, 0.10, 0.20});
  Eigen::VectorXd w = synthetic_covariate(h, root.keyed(Rng::hash("covariate")).bits(0));
  for (double b : bs) {
    for (double sigma : sigmas) {
      std::snprintf(bucket, sizeof bucket, "b=%g;sigma=%g", b, sigma);
      PerturbationSpec ps;
      ps.family = PerturbationSpec::Family::BiasNoise;
      ps.b = b;
      ps.sigma = sigma;
      ps.w = w;
      ps.seed = root.keyed(Rng::hash(bucket)).bits(0);
      RecoveryResult res = recovery_experiment(truth, h, ps, opts);
      for (const MetricRow& m : res.metrics)
        rows.push_back({m.metric + "_" + m.level, "bias_noise", bucket, m.year, m.value});
    }
  }

  std::string path = dir + "/synth_metrics.csv";
  write_long_csv(path, rows);
  man.output(path);
  man.extra["cbgs"] = h.cbg_count();
  man.write(dir, "synth-eval", cfg);
}

void run_analyze(const json& cfg) {
  std::string dir = output_dir(cfg);
  Manifest man;
  GeoHierarchy h = load_hierarchy(cfg, man);
  FlowMatrix m = load_flow_matrix(cfg, "paths.flow_matrix", h, man);
  std::string cats_path = need_str(cfg, "paths.categories");
  man.input(cats_path);
  CbgCategories cats = read_categories_csv(cats_path, h);
  int year = m.year();

  std::vector<LongRow> rows;
  const auto& names = category_names();
  std::vector<std::string> row_labels(names.begin(), names.end());
  row_labels.push_back("all_movers");
  row_labels.push_back("population");

  Eigen::MatrixXd table = category_flow_table(m, cats);
  Eigen::MatrixXd hom = homophily_ratios(table);
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    for (Eigen::Index c = 0; c < table.cols(); ++c) {
      std::string dest(names[static_cast<std::size_t>(c)]);
      rows.push_back({"category_share", row_labels[static_cast<std::size_t>(r)], dest, year,
                      table(r, c)});
      rows.push_back(
          {"homophily", row_labels[static_cast<std::size_t>(r)], dest, year, hom(r, c)});
    }
  }

  struct TargetDef {
    MobilityTarget target;
    const char* name;
  };
  const TargetDef targets[] = {{MobilityTarget::HigherIncome, "higher_income"},
                               {MobilityTarget::TopQuartile, "top_quartile"},
                               {MobilityTarget::BottomQuartile, "bottom_quartile"}};
  struct FilterDef {
    std::optional<RaceCategory> filter;
    const char* name;
  };
  const FilterDef filters[] = {{std::nullopt, "all"},
                               {RaceCategory::White, "white"},
                               {RaceCategory::Asian, "asian"},
                               {RaceCategory::Black, "black"},
                               {RaceCategory::Hispanic, "hispanic"}};
  for (const auto& t : targets) {
    for (const auto& f : filters) {
      Eigen::VectorXd group =
          upward_mobility(m, cats, f.filter, MobilityBucket::Decile, t.target);
      Eigen::VectorXd bucket_all = upward_mobility(m, cats, f.filter, MobilityBucket::Decile,
                                                   t.target, MobilityDenominator::BucketAll);
      for (Eigen::Index d = 0; d < group.size(); ++d) {
        std::string b = "d" + std::to_string(d + 1);
        rows.push_back({std::string("upward_mobility_") + t.name, f.name, b, year, group[d]});
        rows.push_back({std::string("upward_mobility_") + t.name + "_bucket_share", f.name, b,
                        year, bucket_all[d]});
      }
    }
  }

  std::vector<double> edges = opt_num_list(cfg, "analyze.distance_edges", {5.0, 50.0});
  DistanceDistribution dist =
      distance_distribution(m, h, edges, &cats, DistanceStratify::Category);
  for (std::size_t s = 0; s < dist.strata.size(); ++s)
    for (std::size_t b = 0; b < dist.buckets.size(); ++b)
      rows.push_back({"distance_share", dist.strata[s], dist.buckets[b], year,
                      dist.shares(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(b))});
  DistanceDistribution bound =
      distance_distribution(m, h, edges, &cats, DistanceStratify::Boundary);
  for (std::size_t s = 0; s < bound.strata.size(); ++s)
    for (std::size_t b = 0; b < bound.buckets.size(); ++b)
      rows.push_back({"boundary_share", bound.strata[s], bound.buckets[b], year,
                      bound.shares(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(b))});

  if (const json* regions = find(cfg, "analyze.regions")) {
    if (!regions->is_object())
      fail(ErrorCode::BadConfig, "analyze.regions must map names to cbg id arrays");
    std::vector<std::string> region_names;
    std::vector<std::vector<Eigen::Index>> region_sets;
    for (auto it = regions->begin(); it != regions->end(); ++it) {
      std::vector<Eigen::Index> set;
      for (const auto& id : it.value()) {
        Eigen::Index i = h.cbg_index(id.get<std::string>());
        if (i < 0) fail(ErrorCode::UnknownArea, "region cbg " + id.get<std::string>());
        set.push_back(i);
      }
      region_names.push_back(it.key());
      region_sets.push_back(std::move(set));
    }
    Eigen::MatrixXd series = region_out_migration_series({m}, region_sets);
    for (std::size_t r = 0; r < region_names.size(); ++r)
      rows.push_back({"out_migration_rate", region_names[r], "rate", year,
                      series(0, static_cast<Eigen::Index>(r))});
  }

  std::string path = dir + "/analysis.csv";
  write_long_csv(path, rows);
  man.output(path);
  man.write(dir, "analyze", cfg);
}

void run_redact(const json& cfg) {
  std::string dir = output_dir(cfg);
  Manifest man;
  GeoHierarchy h = load_hierarchy(cfg, man);
  FlowMatrix m = load_flow_matrix(cfg, "paths.flow_matrix", h, man);
  int k = opt_int(cfg, "redact.k", 10);
  double q = opt_num(cfg, "redact.q", 0.90);
  RedactionResult res = redact_low_diversity(std::move(m), k, q);
  std::string path = dir + "/redacted_" + std::to_string(res.matrix.year()) + ".csv";
  write_flow_matrix_csv(path, res.matrix, h.cbg_ids());
  man.output(path);
  json redacted = json::array();
  for (Eigen::Index i : res.redacted)
    redacted.push_back(h.cbg_ids()[static_cast<std::size_t>(i)]);
  man.extra["redacted_rows"] = redacted;
  man.write(dir, "redact", cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"migrate-fuse: address histories to harmonized migration matrices"};
  app.require_subcommand(1);

  struct SubDef {
    const char* name;
    const char* help;
    void (*run)(const json&);
  };
  const SubDef defs[] = {
      {"process-records", "address histories to yearly address-level flow matrices",
       run_process_records},
      {"harmonize", "fit a flow matrix to population and flow constraints", run_harmonize},
      {"validate", "score an estimate against a reference matrix", run_validate},
      {"synth-eval", "synthetic-world recovery grid", run_synth_eval},
      {"analyze", "demographic flow tables and distributions", run_analyze},
      {"redact", "zero out low-diversity rows", run_redact},
  };

  struct SubState {
    std::string config_path;
    std::vector<std::string> sets;
    void (*run)(const json&) = nullptr;
  };
  std::vector<SubState> states(std::size(defs));
  SubState* chosen = nullptr;
  for (std::size_t i = 0; i < std::size(defs); ++i) {
    CLI::App* sub = app.add_subcommand(defs[i].name, defs[i].help);
    SubState& st = states[i];
    st.run = defs[i].run;
    sub->add_option("--config", st.config_path, "JSON config file")->required();
    sub->add_option("--set", st.sets, "override a config field (dot.path=value)");
    sub->callback([&chosen, &st] { chosen = &st; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    json cfg = load_config(chosen->config_path, chosen->sets);
    chosen->run(cfg);
  } catch (const migrate::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_numerical(e.code()) ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
