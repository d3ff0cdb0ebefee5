#include "migrate/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "migrate/rng.hpp"

namespace migrate {

GeoHierarchy make_synthetic_hierarchy(const SyntheticWorldSpec& spec) {
  if (spec.states < 1 || spec.counties_per_state < 1 || spec.tracts_per_county < 1 ||
      spec.cbgs_per_tract < 1)
    fail(ErrorCode::BadConfig, "synthetic world dimensions must be positive");
  Rng rng(spec.seed, "world");
  int state_grid = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.states))));
  int county_grid =
      static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.counties_per_state))));

  std::vector<CbgRecord> records;
  char buf[64];
  Eigen::Index cbg = 0;
  for (int s = 0; s < spec.states; ++s) {
    double state_lat = 28.0 + 6.0 * (s / state_grid);
    double state_lon = -118.0 + 6.0 * (s % state_grid);
    std::snprintf(buf, sizeof buf, "S%02d", s);
    std::string state_id = buf;
    for (int c = 0; c < spec.counties_per_state; ++c) {
      double county_lat = state_lat + 1.5 * (c / county_grid);
      double county_lon = state_lon + 1.5 * (c % county_grid);
      std::snprintf(buf, sizeof buf, "%sC%02d", state_id.c_str(), c);
      std::string county_id = buf;
      for (int t = 0; t < spec.tracts_per_county; ++t) {
        double tract_lat = county_lat + 0.5 * t;
        std::snprintf(buf, sizeof buf, "%sT%02d", county_id.c_str(), t);
        std::string tract_id = buf;
        for (int g = 0; g < spec.cbgs_per_tract; ++g, ++cbg) {
          std::snprintf(buf, sizeof buf, "%sB%02d", tract_id.c_str(), g);
          Rng jitter = rng.keyed(static_cast<std::uint64_t>(cbg));
          CbgRecord r;
          r.cbg_id = buf;
          r.tract_id = tract_id;
          r.county_id = county_id;
          r.state_id = state_id;
          r.lat = tract_lat + jitter.uniform(0, -0.2, 0.2);
          r.lon = county_lon + jitter.uniform(1, -0.2, 0.2);
          records.push_back(std::move(r));
        }
      }
    }
  }
  return GeoHierarchy::build(std::move(records));
}

FlowMatrix gen_ground_truth(const GeoHierarchy& h, const GravitySpec& spec) {
  if (!h.has_all_centroids()) fail(ErrorCode::MissingCentroids, "gravity model needs centroids");
  if (spec.stay_rate <= 0.0 || spec.stay_rate >= 1.0)
    fail(ErrorCode::BadConfig, "stay_rate must be in (0, 1)");
  if (spec.total_population <= 0.0) fail(ErrorCode::BadConfig, "total_population must be > 0");
  const Eigen::Index n = h.cbg_count();
  if (n < 2) fail(ErrorCode::BadConfig, "gravity model needs at least 2 cbgs");

  Rng rng(spec.seed, "gravity");
  Rng pop_rng = rng.keyed(Rng::hash("population"));
  Eigen::VectorXd pop(n);
  for (Eigen::Index i = 0; i < n; ++i)
    pop[i] = std::exp(spec.population_spread * pop_rng.normal(static_cast<std::uint64_t>(i)));
  pop *= spec.total_population / pop.sum();

  // Pairwise distances, floored at the 5th percentile so close centroids do
  // not dominate the kernel.
  Eigen::MatrixXd dist(n, n);
  std::vector<double> all;
  all.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double d = haversine_miles(h.lat(i), h.lon(i), h.lat(j), h.lon(j));
      dist(i, j) = d;
      dist(j, i) = d;
      all.push_back(d);
    }
  }
  std::sort(all.begin(), all.end());
  std::size_t k = all.empty() ? 0 : (all.size() * 5 + 99) / 100;
  double floor_d = all[std::min(all.size() - 1, k == 0 ? 0 : k - 1)];
  if (floor_d <= 0.0) floor_d = 1.0;

  std::vector<Eigen::Triplet<double>> ts;
  ts.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double row_total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      row_total += pop[i] * pop[j] / std::pow(std::max(dist(i, j), floor_d), spec.gravity_exponent);
    }
    double movers = (1.0 - spec.stay_rate) * pop[i];
    ts.emplace_back(static_cast<int>(i), static_cast<int>(i), spec.stay_rate * pop[i]);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      double w = pop[i] * pop[j] / std::pow(std::max(dist(i, j), floor_d), spec.gravity_exponent);
      ts.emplace_back(static_cast<int>(i), static_cast<int>(j), movers * w / row_total);
    }
  }
  return FlowMatrix::from_triplets(n, spec.year, ts);
}

FlowMatrix perturb_structured(const FlowMatrix& m, const GeoHierarchy& h, double tau,
                              std::uint64_t seed) {
  if (tau < 0.0) fail(ErrorCode::BadConfig, "tau must be >= 0");
  if (h.cbg_count() != m.dim()) fail(ErrorCode::PartitionMismatch, "hierarchy does not match matrix");
  const Eigen::Index n = m.dim();
  Rng rng(seed, "structured");
  Rng row_rng = rng.keyed(Rng::hash("row"));
  Rng sdiag_rng = rng.keyed(Rng::hash("state_diag"));
  Rng scol_rng = rng.keyed(Rng::hash("state_col"));
  Rng spair_rng = rng.keyed(Rng::hash("state_pair"));
  Rng crow_rng = rng.keyed(Rng::hash("county_row"));
  Rng ccol_rng = rng.keyed(Rng::hash("county_col"));

  Eigen::VectorXd row_f(n);
  for (Eigen::Index i = 0; i < n; ++i)
    row_f[i] = row_rng.lognormal(static_cast<std::uint64_t>(i), tau);
  int ns = h.state_count(), nc = h.county_count();
  Eigen::VectorXd sdiag(ns), scol(ns), crow(nc), ccol(nc);
  for (int s = 0; s < ns; ++s) {
    sdiag[s] = sdiag_rng.lognormal(static_cast<std::uint64_t>(s), tau);
    scol[s] = scol_rng.lognormal(static_cast<std::uint64_t>(s), tau);
  }
  Eigen::MatrixXd spair(ns, ns);
  for (int r = 0; r < ns; ++r)
    for (int s = 0; s < ns; ++s)
      spair(r, s) = spair_rng.keyed(static_cast<std::uint64_t>(r))
                        .lognormal(static_cast<std::uint64_t>(s), tau);
  for (int c = 0; c < nc; ++c) {
    crow[c] = crow_rng.lognormal(static_cast<std::uint64_t>(c), tau);
    ccol[c] = ccol_rng.lognormal(static_cast<std::uint64_t>(c), tau);
  }

  FlowMatrix out = m;
  transform_entries(out, [&](Eigen::Index i, Eigen::Index j, double& v) {
    int si = h.state_of(i), sj = h.state_of(j);
    double f = row_f[i] * (i == j ? sdiag[sj] : scol[sj]) * spair(si, sj) *
               crow[h.county_of(i)] * ccol[h.county_of(j)];
    v *= f;
  });
  return out;
}

FlowMatrix perturb_bias_noise(const FlowMatrix& m, const Eigen::VectorXd& w, double b,
                              double sigma, std::uint64_t seed) {
  if (w.size() != m.dim()) fail(ErrorCode::LengthMismatch, "covariate length");
  if (!w.allFinite()) fail(ErrorCode::NonFiniteInput, "covariate");
  if (sigma < 0.0) fail(ErrorCode::BadConfig, "sigma must be >= 0");
  Rng rng(seed, "bias_noise");
  FlowMatrix out = m;
  transform_entries(out, [&](Eigen::Index i, Eigen::Index j, double& v) {
    double z = sigma == 0.0
                   ? 0.0
                   : rng.keyed(static_cast<std::uint64_t>(i)).normal(static_cast<std::uint64_t>(j));
    v *= std::exp(b * (w[i] + w[j]) + sigma * z);
  });
  return out;
}

Eigen::VectorXd synthetic_covariate(const GeoHierarchy& h, std::uint64_t seed) {
  Rng rng(seed, "covariate");
  const Eigen::Index n = h.cbg_count();
  if (n < 2) fail(ErrorCode::BadConfig, "covariate needs at least 2 cbgs");
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) w[i] = rng.normal(static_cast<std::uint64_t>(i));
  double mean = w.mean();
  w.array() -= mean;
  double sd = std::sqrt(w.squaredNorm() / static_cast<double>(n));
  if (sd <= 0.0) fail(ErrorCode::ZeroVariance, "degenerate covariate draw");
  return w / sd;
}

ConstraintSet constraints_from_truth(const FlowMatrix& truth, const GeoHierarchy& h) {
  BlockPartition states = h.partition(GeoLevel::State);
  BlockPartition counties = h.partition(GeoLevel::County);
  ConstraintSet c;
  c.year = truth.year();
  DiagOffdiagSums state_sums = split_diag_offdiag(truth, states);
  c.state_stayers = state_sums.diag;
  c.state_pops = state_sums.diag + state_sums.offdiag;
  c.state_flows = block_sum(truth, states, states);
  c.county_pops_prev = block_row_sums(truth, counties);
  c.county_pops_curr = block_col_sums(truth, counties);
  c.adjusted = true;  // synthetic worlds have no births, deaths or border moves
  return c;
}

PopulationPaths paths_from_truth(const FlowMatrix& truth) {
  Eigen::VectorXd rows = truth.row_sums();
  Eigen::MatrixXd values(rows.size(), kPathYears);
  for (int y = 0; y < kPathYears; ++y) values.col(y) = rows;
  return PopulationPaths::from_values(std::move(values));
}

FlowMatrix apply_perturbation(const FlowMatrix& truth, const GeoHierarchy& h,
                              const PerturbationSpec& spec) {
  if (spec.family == PerturbationSpec::Family::Structured)
    return perturb_structured(truth, h, spec.tau, spec.seed);
  // The bias model expects a standardized covariate; a drifting scale would
  // silently change what "b" means.
  if (spec.w.size() != truth.dim()) fail(ErrorCode::LengthMismatch, "covariate length");
  double mean = spec.w.mean();
  double sd = std::sqrt((spec.w.array() - mean).square().sum() / static_cast<double>(spec.w.size()));
  if (std::abs(mean) > 1e-6 || std::abs(sd - 1.0) > 1e-6)
    fail(ErrorCode::BadConfig, "covariate must have mean 0 and sd 1");
  return perturb_bias_noise(truth, spec.w, spec.b, spec.sigma, spec.seed);
}

RecoveryResult score_recovery(const FlowMatrix& truth, const FlowMatrix& perturbed,
                              const GeoHierarchy& h, const HarmonizeOptions& options) {
  if (truth.dim() != perturbed.dim())
    fail(ErrorCode::DimensionMismatch, "truth and perturbed matrices differ in size");
  ConstraintSet c = constraints_from_truth(truth, h);
  PopulationPaths paths = paths_from_truth(truth);

  RecoveryResult out;
  auto [harmonized, report] = harmonize(perturbed, c, paths, h, options);
  out.harmonized = std::move(harmonized);
  out.report = std::move(report);

  const GeoLevel levels[] = {GeoLevel::Cbg, GeoLevel::Tract, GeoLevel::County, GeoLevel::State};
  for (GeoLevel level : levels) {
    BlockPartition p = h.partition(level);
    for (bool movers : {false, true}) {
      AlignedVectors harm = vectorize_flows(out.harmonized, truth, p, movers);
      AlignedVectors raw = vectorize_flows(perturbed, truth, p, movers);
      if (raw.estimate.size() != harm.estimate.size())
        fail(ErrorCode::DimensionMismatch, "harmonizer changed the sparsity pattern");
      std::string suffix = movers ? "_movers" : "_all";
      int year = truth.year();
      out.metrics.push_back({"pearson" + suffix, p.label, false, year,
                             correlation(harm.estimate, harm.truth)});
      out.metrics.push_back({"spearman" + suffix, p.label, false, year,
                             correlation(harm.estimate, harm.truth, nullptr, true)});
      double reduction;
      try {
        reduction = rmse_reduction(raw.estimate, harm.estimate, harm.truth);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::RawPerfect) throw;
        reduction = std::numeric_limits<double>::quiet_NaN();
      }
      out.metrics.push_back({"rmse_reduction" + suffix, p.label, false, year, reduction});
    }
  }
  return out;
}

RecoveryResult recovery_experiment(const FlowMatrix& truth, const GeoHierarchy& h,
                                   const PerturbationSpec& spec,
                                   const HarmonizeOptions& options) {
  return score_recovery(truth, apply_perturbation(truth, h, spec), h, options);
}

}  // namespace migrate
