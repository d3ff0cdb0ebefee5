#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "migrate/error.hpp"
#include "migrate/flow_matrix.hpp"

namespace migrate {

// Calendar month stored as a single integer (year * 12 + month - 1), so
// arithmetic and comparisons are plain int operations.
struct YearMonth {
  int v = 0;

  static YearMonth of(int year, int month) { return {year * 12 + (month - 1)}; }
  static YearMonth parse(std::string_view text);  // "YYYY-MM"

  int year() const { return v >= 0 ? v / 12 : (v - 11) / 12; }
  int month() const { return v - year() * 12 + 1; }  // 1..12
  YearMonth plus_months(int k) const { return {v + k}; }

  auto operator<=>(const YearMonth&) const = default;

  std::string str() const;
};

bool is_leap_year(int year);
int days_in_month(YearMonth m);
int days_in_year(int year);

enum class AddressKind { Street, PoBox, RuralRoute, Incomplete };

AddressKind parse_address_kind(std::string_view s);
const char* address_kind_name(AddressKind k);

struct AddressEntry {
  std::string address_id;
  AddressKind kind = AddressKind::Street;
  std::optional<YearMonth> effective_date;
};

struct PersonRecord {
  std::string person_id;
  std::vector<AddressEntry> addresses;
  std::optional<YearMonth> first_seen;
  std::optional<YearMonth> last_seen;
};

struct MonthInterval {
  YearMonth start, end;  // inclusive

  bool contains(YearMonth m) const { return start <= m && m <= end; }
  int months() const { return end.v - start.v + 1; }
};

// Probability distribution over addresses for one month.  Entries are sorted
// by address id and sum to 1.
struct MonthlyResidence {
  YearMonth month;
  std::vector<std::pair<std::string, double>> distribution;
};

struct AddressFlowTuple {
  std::string origin;
  std::string dest;
  double weight = 0.0;
};

// Months the person is considered active: observed dates padded by 12 months
// on each side.  The start reconciles effective dates with first_seen, the
// end with last_seen.  Throws NoDates when either side has no evidence.
MonthInterval activity_interval(const PersonRecord& r);

// Address cleaning and monthly imputation:
//   - undated addresses are dropped unless the record has exactly one address;
//   - a PO box is dropped when a dated non-box address sits within 12 months
//     (inclusive) of it;
//   - each surviving address spans [its effective date, the next one), the
//     months before the first date fall to the chronologically first address,
//     and months after the last date to the last;
//   - addresses sharing an effective date split the month uniformly.
// Returns one distribution per month of the activity interval.
std::vector<MonthlyResidence> clean_addresses(const PersonRecord& r);

// Cross products for the ACS one-year-ago question: for every month m of
// `year` with both m and m-12 inside the person's months, pairs residence at
// m-12 with residence at m, weighted by days_in_month(m) / days_in_year(year).
// When the two distributions are identical (1e-12 tolerance) the person is
// treated as a certain stayer and only (a, a) pairs are emitted.  Tuples are
// merged per (origin, dest) over the year and returned sorted.
std::vector<AddressFlowTuple> simulate_acs_year(const std::vector<MonthlyResidence>& months,
                                                int year);

// Address-level flow matrix for one year.  Ids are sorted; the matrix is
// indexed by position in `address_ids`.
struct AddressMatrix {
  int year = 0;
  std::vector<std::string> address_ids;
  SparseRowMatrix flows;

  Eigen::Index address_index(std::string_view id) const;
  double total() const;
};

// Merges per-person tuple lists into one matrix.  Input order does not affect
// the result: tuples are sorted before accumulation.
AddressMatrix aggregate_address_flows(int year, const std::vector<std::vector<AddressFlowTuple>>& tuples);

// Full record pipeline for a span of years.  Persons are processed in
// parallel; per-person failures carry the person id.
std::vector<AddressMatrix> build_address_matrices(const std::vector<PersonRecord>& records,
                                                  int first_year, int last_year);

}  // namespace migrate
