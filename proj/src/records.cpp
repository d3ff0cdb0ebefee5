#include "migrate/records.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <unordered_map>

namespace migrate {

YearMonth YearMonth::parse(std::string_view text) {
  auto bad = [&] { fail(ErrorCode::BadFormat, "year-month '" + std::string(text) + "'"); };
  if (text.size() != 7 || text[4] != '-') bad();
  int year = 0, month = 0;
  for (int i = 0; i < 4; ++i) {
    if (text[i] < '0' || text[i] > '9') bad();
    year = year * 10 + (text[i] - '0');
  }
  for (int i = 5; i < 7; ++i) {
    if (text[i] < '0' || text[i] > '9') bad();
    month = month * 10 + (text[i] - '0');
  }
  if (month < 1 || month > 12) bad();
  return of(year, month);
}

std::string YearMonth::str() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d", year(), month());
  return buf;
}

bool is_leap_year(int year) {
  return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
}

int days_in_month(YearMonth m) {
  static const int days[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m.month() == 2 && is_leap_year(m.year())) return 29;
  return days[m.month() - 1];
}

int days_in_year(int year) { return is_leap_year(year) ? 366 : 365; }

AddressKind parse_address_kind(std::string_view s) {
  if (s == "street") return AddressKind::Street;
  if (s == "pobox") return AddressKind::PoBox;
  if (s == "rural_route") return AddressKind::RuralRoute;
  if (s == "incomplete") return AddressKind::Incomplete;
  fail(ErrorCode::BadFormat, "address kind '" + std::string(s) + "'");
}

const char* address_kind_name(AddressKind k) {
  switch (k) {
    case AddressKind::Street: return "street";
    case AddressKind::PoBox: return "pobox";
    case AddressKind::RuralRoute: return "rural_route";
    case AddressKind::Incomplete: return "incomplete";
  }
  return "?";
}

namespace {

constexpr int kPadMonths = 12;

struct Reconciled {
  YearMonth first, last;
};

// Earliest and latest observed month before padding.  first_seen can only
// pull the start earlier, last_seen only push the end later.
Reconciled reconcile_dates(const PersonRecord& r) {
  std::optional<YearMonth> lo, hi;
  for (const auto& a : r.addresses) {
    if (!a.effective_date) continue;
    if (!lo || *a.effective_date < *lo) lo = a.effective_date;
    if (!hi || *hi < *a.effective_date) hi = a.effective_date;
  }
  if (r.first_seen && (!lo || *r.first_seen < *lo)) lo = r.first_seen;
  if (r.last_seen && (!hi || *hi < *r.last_seen)) hi = r.last_seen;
  if (!lo || !hi) fail(ErrorCode::NoDates, "person " + r.person_id + " has no usable dates");
  return {*lo, *hi};
}

}  // namespace

MonthInterval activity_interval(const PersonRecord& r) {
  Reconciled rec = reconcile_dates(r);
  return {rec.first.plus_months(-kPadMonths), rec.last.plus_months(kPadMonths)};
}

std::vector<MonthlyResidence> clean_addresses(const PersonRecord& r) {
  Reconciled rec = reconcile_dates(r);
  MonthInterval interval{rec.first.plus_months(-kPadMonths), rec.last.plus_months(kPadMonths)};

  struct Dated {
    std::string id;
    AddressKind kind;
    YearMonth eff;
  };
  std::vector<Dated> kept;
  for (const auto& a : r.addresses)
    if (a.effective_date) kept.push_back({a.address_id, a.kind, *a.effective_date});
  if (kept.empty()) {
    if (r.addresses.size() == 1) {
      // A sole undated address stands in for the whole history, anchored at
      // the first observed month.
      kept.push_back({r.addresses[0].address_id, r.addresses[0].kind, rec.first});
    } else {
      fail(ErrorCode::EmptyAfterCleaning,
           "person " + r.person_id + " has only undated addresses");
    }
  }

  // PO boxes are shadows of a real residence when a dated non-box address
  // exists within a year; flag first, erase together.
  std::vector<bool> drop(kept.size(), false);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (kept[i].kind != AddressKind::PoBox) continue;
    for (const auto& other : kept) {
      if (other.kind == AddressKind::PoBox) continue;
      if (std::abs(other.eff.v - kept[i].eff.v) <= kPadMonths) {
        drop[i] = true;
        break;
      }
    }
  }
  std::vector<Dated> survivors;
  for (std::size_t i = 0; i < kept.size(); ++i)
    if (!drop[i]) survivors.push_back(kept[i]);
  if (survivors.empty())
    fail(ErrorCode::EmptyAfterCleaning, "person " + r.person_id + " lost every address");

  // Addresses sharing an effective date form one uniform group.
  std::map<YearMonth, std::vector<std::string>> groups;
  for (const auto& a : survivors) groups[a.eff].push_back(a.id);
  std::vector<std::pair<YearMonth, std::vector<std::pair<std::string, double>>>> segments;
  segments.reserve(groups.size());
  for (auto& [eff, ids] : groups) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::vector<std::pair<std::string, double>> dist;
    dist.reserve(ids.size());
    double p = 1.0 / static_cast<double>(ids.size());
    for (auto& id : ids) dist.emplace_back(std::move(id), p);
    segments.emplace_back(eff, std::move(dist));
  }

  std::vector<MonthlyResidence> out;
  out.reserve(static_cast<std::size_t>(interval.months()));
  std::size_t seg = 0;
  for (YearMonth m = interval.start; m <= interval.end; m = m.plus_months(1)) {
    // Advance to the last segment whose effective date is <= m; months before
    // the first date use the first segment.
    while (seg + 1 < segments.size() && segments[seg + 1].first <= m) ++seg;
    out.push_back({m, segments[seg].second});
  }
  return out;
}

namespace {

bool same_distribution(const std::vector<std::pair<std::string, double>>& a,
                       const std::vector<std::pair<std::string, double>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first) return false;
    if (std::abs(a[i].second - b[i].second) > 1e-12) return false;
  }
  return true;
}

}  // namespace

std::vector<AddressFlowTuple> simulate_acs_year(const std::vector<MonthlyResidence>& months,
                                                int year) {
  if (months.empty()) return {};
  std::unordered_map<int, const MonthlyResidence*> lookup;
  lookup.reserve(months.size());
  YearMonth first = months.front().month, last = months.front().month;
  for (const auto& m : months) {
    lookup[m.month.v] = &m;
    first = std::min(first, m.month);
    last = std::max(last, m.month);
  }

  std::map<std::pair<std::string, std::string>, double> acc;
  for (int mo = 1; mo <= 12; ++mo) {
    YearMonth cur = YearMonth::of(year, mo);
    YearMonth prev = cur.plus_months(-12);
    if (cur < first || last < cur || prev < first || last < prev) continue;
    auto ic = lookup.find(cur.v);
    auto ip = lookup.find(prev.v);
    if (ic == lookup.end() || ip == lookup.end())
      fail(ErrorCode::MissingMonth, "no residence for " + cur.str() + " or " + prev.str());
    double w = static_cast<double>(days_in_month(cur)) / days_in_year(year);
    const auto& dp = ip->second->distribution;
    const auto& dc = ic->second->distribution;
    if (same_distribution(dp, dc)) {
      // Permanence: identical distributions mean a certain stayer, not an
      // accidental mover between equally likely addresses.
      for (const auto& [a, p] : dc) acc[{a, a}] += p * w;
    } else {
      for (const auto& [a1, p1] : dp)
        for (const auto& [a2, p2] : dc) acc[{a1, a2}] += p1 * p2 * w;
    }
  }

  std::vector<AddressFlowTuple> out;
  out.reserve(acc.size());
  for (const auto& [key, w] : acc) out.push_back({key.first, key.second, w});
  return out;
}

Eigen::Index AddressMatrix::address_index(std::string_view id) const {
  auto it = std::lower_bound(address_ids.begin(), address_ids.end(), id);
  if (it == address_ids.end() || *it != id) return -1;
  return static_cast<Eigen::Index>(it - address_ids.begin());
}

double AddressMatrix::total() const {
  KahanSum acc;
  for (Eigen::Index i = 0; i < flows.rows(); ++i)
    for (SparseRowMatrix::InnerIterator it(flows, i); it; ++it) acc.add(it.value());
  return acc.value();
}

AddressMatrix aggregate_address_flows(int year,
                                      const std::vector<std::vector<AddressFlowTuple>>& tuples) {
  struct Ref {
    const AddressFlowTuple* t;
  };
  std::vector<Ref> flat;
  std::size_t n = 0;
  for (const auto& list : tuples) n += list.size();
  flat.reserve(n);
  for (const auto& list : tuples)
    for (const auto& t : list) flat.push_back({&t});
  // Sorting by (origin, dest, weight) makes the accumulation sequence a pure
  // function of the multiset of tuples, so person order cannot change bits.
  std::sort(flat.begin(), flat.end(), [](const Ref& a, const Ref& b) {
    if (a.t->origin != b.t->origin) return a.t->origin < b.t->origin;
    if (a.t->dest != b.t->dest) return a.t->dest < b.t->dest;
    return a.t->weight < b.t->weight;
  });

  AddressMatrix out;
  out.year = year;
  for (const auto& r : flat) {
    out.address_ids.push_back(r.t->origin);
    out.address_ids.push_back(r.t->dest);
  }
  std::sort(out.address_ids.begin(), out.address_ids.end());
  out.address_ids.erase(std::unique(out.address_ids.begin(), out.address_ids.end()),
                        out.address_ids.end());

  Eigen::Index dim = static_cast<Eigen::Index>(out.address_ids.size());
  std::vector<Eigen::Triplet<double>> ts;
  std::size_t i = 0;
  while (i < flat.size()) {
    std::size_t j = i;
    KahanSum w;
    while (j < flat.size() && flat[j].t->origin == flat[i].t->origin &&
           flat[j].t->dest == flat[i].t->dest) {
      if (flat[j].t->weight < 0.0)
        fail(ErrorCode::NegativeEntry, "negative tuple weight for " + flat[j].t->origin);
      w.add(flat[j].t->weight);
      ++j;
    }
    if (w.value() != 0.0)
      ts.emplace_back(static_cast<int>(out.address_index(flat[i].t->origin)),
                      static_cast<int>(out.address_index(flat[i].t->dest)), w.value());
    i = j;
  }
  out.flows.resize(dim, dim);
  out.flows.setFromTriplets(ts.begin(), ts.end());
  out.flows.makeCompressed();
  return out;
}

std::vector<AddressMatrix> build_address_matrices(const std::vector<PersonRecord>& records,
                                                  int first_year, int last_year) {
  if (last_year < first_year) fail(ErrorCode::BadConfig, "year range is empty");
  Eigen::Index n = static_cast<Eigen::Index>(records.size());
  std::vector<std::vector<MonthlyResidence>> cleaned(records.size());
  parallel_rows(n, [&](Eigen::Index begin, Eigen::Index end) {
    for (Eigen::Index i = begin; i < end; ++i)
      cleaned[static_cast<std::size_t>(i)] = clean_addresses(records[static_cast<std::size_t>(i)]);
  });

  std::vector<AddressMatrix> out;
  out.reserve(static_cast<std::size_t>(last_year - first_year + 1));
  std::vector<std::vector<AddressFlowTuple>> per_person(records.size());
  for (int year = first_year; year <= last_year; ++year) {
    parallel_rows(n, [&](Eigen::Index begin, Eigen::Index end) {
      for (Eigen::Index i = begin; i < end; ++i)
        per_person[static_cast<std::size_t>(i)] =
            simulate_acs_year(cleaned[static_cast<std::size_t>(i)], year);
    });
    out.push_back(aggregate_address_flows(year, per_person));
  }
  return out;
}

}  // namespace migrate
