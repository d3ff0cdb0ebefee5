#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "migrate/flow_matrix.hpp"
#include "migrate/geo.hpp"
#include "migrate/records.hpp"

namespace migrate {

// ZIP-resolved address: candidate tracts with overlap weights.
struct ZipAssignment {
  std::string address_id;
  std::string zip;
  std::vector<std::pair<std::string, double>> tract_weights;
};

// Row-stochastic address -> CBG assignment matrix.  Exactly geocoded
// addresses have a single unit entry; ZIP-resolved addresses spread mass over
// the tract candidates (normalized) and within each tract proportionally to
// CBG population.
class CrosswalkMatrix {
 public:
  const std::vector<std::string>& address_ids() const { return address_ids_; }
  Eigen::Index address_index(std::string_view id) const;
  Eigen::Index cbg_count() const { return rows_.cols(); }
  const SparseRowMatrix& rows() const { return rows_; }

  friend CrosswalkMatrix build_crosswalk(
      const std::vector<std::pair<std::string, std::string>>& exact,
      const std::vector<ZipAssignment>& fuzzy,
      const std::unordered_map<std::string, double>& cbg_population, const GeoHierarchy& h);

 private:
  std::vector<std::string> address_ids_;  // sorted
  SparseRowMatrix rows_;                  // n_addresses x n_cbgs
};

// exact: (address_id, cbg_id) pairs.  An address present in both inputs uses
// the exact assignment.  Within a tract, CBGs with zero recorded population
// receive mass only when the whole tract has none, in which case the split is
// uniform.  Rows sum to 1 within 1e-12.
CrosswalkMatrix build_crosswalk(const std::vector<std::pair<std::string, std::string>>& exact,
                                const std::vector<ZipAssignment>& fuzzy,
                                const std::unordered_map<std::string, double>& cbg_population,
                                const GeoHierarchy& h);

struct CrosswalkApplication {
  FlowMatrix matrix;
  std::int64_t dropped_addresses = 0;  // addresses in A with no crosswalk row
  double dropped_mass = 0.0;
};

// Pushes an address-level flow matrix through the crosswalk:
//
//   E = G^T (A - diag(A)) G + diag(G^T diag(A))
//
// Off-diagonal address flows spread over CBG pairs; stayers spread over the
// diagonal only, so a fuzzy address can never turn a stayer into a mover.
// Addresses without a crosswalk row are dropped and counted.
CrosswalkApplication apply_crosswalk(const AddressMatrix& a, const CrosswalkMatrix& g);

}  // namespace migrate
