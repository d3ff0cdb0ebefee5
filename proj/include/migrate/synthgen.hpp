#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "migrate/constraints.hpp"
#include "migrate/flow_matrix.hpp"
#include "migrate/geo.hpp"
#include "migrate/harmonizer.hpp"
#include "migrate/population_path.hpp"
#include "migrate/validator.hpp"

namespace migrate {

// Regular synthetic geography: states laid out on a coarse grid, counties and
// tracts nested inside, CBG centroids jittered around the tract center.  Ids
// are zero-padded so lexicographic order equals construction order.
struct SyntheticWorldSpec {
  int states = 4;
  int counties_per_state = 3;
  int tracts_per_county = 2;
  int cbgs_per_tract = 9;
  std::uint64_t seed = 1;
};

GeoHierarchy make_synthetic_hierarchy(const SyntheticWorldSpec& spec);

// Gravity-model ground truth.  Populations are lognormal around
// total_population / n; each row keeps stay_rate of its mass on the diagonal
// and spreads the rest over destinations proportional to
// pop_i * pop_j / dist^exponent.  Distances are floored at the 5th percentile
// of pairwise centroid distances so near-coincident centroids cannot blow up.
struct GravitySpec {
  int year = 2015;
  double total_population = 1e6;
  double stay_rate = 0.87;
  double gravity_exponent = 2.0;
  double population_spread = 1.0;  // sigma of log-population draws
  std::uint64_t seed = 1;
};

FlowMatrix gen_ground_truth(const GeoHierarchy& h, const GravitySpec& spec);

// Multiplicative lognormal distortions mirroring what the harmonizer can fix:
// per-row factors, state diagonal and incoming factors, state-pair factors,
// county row and column factors, each drawn LogNormal(0, tau).  tau = 0
// returns a bit-identical copy.
FlowMatrix perturb_structured(const FlowMatrix& m, const GeoHierarchy& h, double tau,
                              std::uint64_t seed);

// Covariate-coupled bias plus heteroscedastic noise:
//   out_ij = m_ij * exp(b * (w_i + w_j) + sigma * z_ij)
// with z drawn only on the support.  b = sigma = 0 returns a bit-identical
// copy.
FlowMatrix perturb_bias_noise(const FlowMatrix& m, const Eigen::VectorXd& w, double b,
                              double sigma, std::uint64_t seed);

// Standardized synthetic CBG covariate (mean 0, unit variance) for the bias
// model.
Eigen::VectorXd synthetic_covariate(const GeoHierarchy& h, std::uint64_t seed);

// Marginal targets read off a ground-truth matrix.  These are exactly the
// margins the harmonizer fits, so recovering truth from a perturbed copy is
// possible in principle.  The set is marked adjusted: synthetic worlds have
// no births, deaths or international moves.
ConstraintSet constraints_from_truth(const FlowMatrix& truth, const GeoHierarchy& h);

// Yearly populations equal to the truth's row sums for every covered year.
PopulationPaths paths_from_truth(const FlowMatrix& truth);

// One perturbation draw: which family, its scales, the covariate for the
// bias model, and the seed everything derives from.
struct PerturbationSpec {
  enum class Family { Structured, BiasNoise };
  Family family = Family::Structured;
  double tau = 0.0;
  double b = 0.0;
  double sigma = 0.0;
  Eigen::VectorXd w;  // bias_noise only; must be z-scored
  std::uint64_t seed = 0;
};

FlowMatrix apply_perturbation(const FlowMatrix& truth, const GeoHierarchy& h,
                              const PerturbationSpec& spec);

// Perturb -> harmonize -> score against truth at every level, all entries and
// movers only (metrics pearson/spearman/rmse_reduction with _all/_movers
// suffixes).  The harmonizer preserves the sparsity pattern, which keeps
// raw/harmonized/truth vectors aligned cell by cell.  A raw matrix that
// already matches truth makes rmse_reduction undefined; those rows carry NaN.
struct RecoveryResult {
  FlowMatrix harmonized;
  HarmonizeReport report;
  std::vector<MetricRow> metrics;
};

RecoveryResult recovery_experiment(const FlowMatrix& truth, const GeoHierarchy& h,
                                   const PerturbationSpec& spec,
                                   const HarmonizeOptions& options = {});

// Same scoring for an already-perturbed matrix (held-out studies reuse one
// draw across harmonizer configurations).
RecoveryResult score_recovery(const FlowMatrix& truth, const FlowMatrix& perturbed,
                              const GeoHierarchy& h, const HarmonizeOptions& options = {});

}  // namespace migrate
