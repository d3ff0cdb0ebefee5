#include "migrate/crosswalk.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace migrate {

Eigen::Index CrosswalkMatrix::address_index(std::string_view id) const {
  auto it = std::lower_bound(address_ids_.begin(), address_ids_.end(), id);
  if (it == address_ids_.end() || *it != id) return -1;
  return static_cast<Eigen::Index>(it - address_ids_.begin());
}

CrosswalkMatrix build_crosswalk(const std::vector<std::pair<std::string, std::string>>& exact,
                                const std::vector<ZipAssignment>& fuzzy,
                                const std::unordered_map<std::string, double>& cbg_population,
                                const GeoHierarchy& h) {
  // CBGs of each tract, in cbg index order.
  std::vector<std::vector<Eigen::Index>> tract_cbgs(static_cast<std::size_t>(h.tract_count()));
  for (Eigen::Index i = 0; i < h.cbg_count(); ++i)
    tract_cbgs[static_cast<std::size_t>(h.tract_of(i))].push_back(i);

  auto population = [&](Eigen::Index cbg) {
    auto it = cbg_population.find(h.cbg_ids()[static_cast<std::size_t>(cbg)]);
    double p = it == cbg_population.end() ? 0.0 : it->second;
    if (!std::isfinite(p) || p < 0.0)
      fail(ErrorCode::NegativeEntry, "population for cbg " + h.cbg_ids()[static_cast<std::size_t>(cbg)]);
    return p;
  };

  // Exact rows win over fuzzy rows; duplicate exact rows must agree.
  std::map<std::string, std::vector<std::pair<Eigen::Index, double>>> assignments;
  for (const auto& [addr, cbg_id] : exact) {
    Eigen::Index cbg = h.cbg_index(cbg_id);
    if (cbg < 0) fail(ErrorCode::UnknownArea, "cbg " + cbg_id + " for address " + addr);
    auto [it, inserted] = assignments.try_emplace(addr);
    if (!inserted) {
      if (it->second.size() == 1 && it->second[0].first == cbg) continue;
      fail(ErrorCode::DuplicateId, "address " + addr + " geocoded twice");
    }
    it->second = {{cbg, 1.0}};
  }

  for (const auto& za : fuzzy) {
    if (assignments.count(za.address_id)) continue;
    double wsum = 0.0;
    for (const auto& [tract_id, w] : za.tract_weights) {
      if (!std::isfinite(w) || w < 0.0)
        fail(ErrorCode::NegativeEntry, "tract weight for address " + za.address_id);
      wsum += w;
    }
    if (wsum <= 0.0) continue;  // nothing to assign; address will be dropped
    std::map<Eigen::Index, double> row;
    for (const auto& [tract_id, w] : za.tract_weights) {
      if (w == 0.0) continue;
      int tract = h.tract_index(tract_id);
      if (tract < 0) fail(ErrorCode::UnknownArea, "tract " + tract_id + " for address " + za.address_id);
      const auto& cbgs = tract_cbgs[static_cast<std::size_t>(tract)];
      double tract_share = w / wsum;
      double pop_total = 0.0;
      for (Eigen::Index cbg : cbgs) pop_total += population(cbg);
      if (pop_total > 0.0) {
        for (Eigen::Index cbg : cbgs) {
          double p = population(cbg);
          if (p > 0.0) row[cbg] += tract_share * (p / pop_total);
        }
      } else {
        // No population signal anywhere in the tract: uniform split.
        double u = tract_share / static_cast<double>(cbgs.size());
        for (Eigen::Index cbg : cbgs) row[cbg] += u;
      }
    }
    std::vector<std::pair<Eigen::Index, double>> entries(row.begin(), row.end());
    assignments.emplace(za.address_id, std::move(entries));
  }

  CrosswalkMatrix g;
  g.address_ids_.reserve(assignments.size());
  for (const auto& [addr, row] : assignments) g.address_ids_.push_back(addr);
  std::vector<Eigen::Triplet<double>> ts;
  Eigen::Index r = 0;
  for (const auto& [addr, row] : assignments) {
    for (const auto& [cbg, w] : row) ts.emplace_back(static_cast<int>(r), static_cast<int>(cbg), w);
    ++r;
  }
  g.rows_.resize(static_cast<Eigen::Index>(g.address_ids_.size()), h.cbg_count());
  g.rows_.setFromTriplets(ts.begin(), ts.end());
  g.rows_.makeCompressed();
  return g;
}

CrosswalkApplication apply_crosswalk(const AddressMatrix& a, const CrosswalkMatrix& g) {
  Eigen::Index n_cbg = g.cbg_count();
  if (n_cbg <= 0) fail(ErrorCode::DimensionMismatch, "crosswalk has no cbg columns");

  // Address index in A -> row in G, or -1 for dropped.
  Eigen::Index n_addr = static_cast<Eigen::Index>(a.address_ids.size());
  std::vector<Eigen::Index> remap(static_cast<std::size_t>(n_addr));
  for (Eigen::Index i = 0; i < n_addr; ++i)
    remap[static_cast<std::size_t>(i)] = g.address_index(a.address_ids[static_cast<std::size_t>(i)]);

  Eigen::Index n_g = g.rows().rows();
  std::vector<Eigen::Triplet<double>> off_ts;
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n_g);
  std::int64_t dropped = 0;
  for (Eigen::Index i = 0; i < n_addr; ++i)
    if (remap[static_cast<std::size_t>(i)] < 0) ++dropped;
  KahanSum dropped_mass;
  for (Eigen::Index i = 0; i < n_addr; ++i) {
    Eigen::Index gi = remap[static_cast<std::size_t>(i)];
    for (SparseRowMatrix::InnerIterator it(a.flows, i); it; ++it) {
      Eigen::Index gj = remap[static_cast<std::size_t>(it.col())];
      if (gi < 0 || gj < 0) {
        dropped_mass.add(it.value());
        continue;
      }
      if (i == it.col())
        diag[gi] += it.value();
      else
        off_ts.emplace_back(static_cast<int>(gi), static_cast<int>(gj), it.value());
    }
  }

  SparseRowMatrix off(n_g, n_g);
  off.setFromTriplets(off_ts.begin(), off_ts.end());

  // Movers spread over origin x destination CBG pairs.
  SparseRowMatrix gt = SparseRowMatrix(g.rows().transpose());
  SparseRowMatrix movers = gt * off * g.rows();

  // Stayers spread along the diagonal only.
  Eigen::VectorXd cbg_diag = gt * diag;

  std::vector<Eigen::Triplet<double>> ts;
  ts.reserve(static_cast<std::size_t>(movers.nonZeros()) + static_cast<std::size_t>(n_cbg));
  for (Eigen::Index i = 0; i < movers.rows(); ++i)
    for (SparseRowMatrix::InnerIterator it(movers, i); it; ++it)
      ts.emplace_back(static_cast<int>(i), static_cast<int>(it.col()), it.value());
  for (Eigen::Index i = 0; i < n_cbg; ++i)
    if (cbg_diag[i] != 0.0) ts.emplace_back(static_cast<int>(i), static_cast<int>(i), cbg_diag[i]);

  CrosswalkApplication out{FlowMatrix::from_triplets(n_cbg, a.year, ts), dropped,
                           dropped_mass.value()};
  return out;
}

}  // namespace migrate
