#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "hajek/core.hpp"
#include "hajek/error.hpp"
#include "hajek/rng.hpp"

namespace hajek {

namespace detail {

inline std::vector<std::vector<int>> stratum_members(
    const potential_table& table) {
  std::vector<std::vector<int>> members(table.stratum_count());
  for (std::size_t i = 0; i < table.size(); ++i)
    members[table.stratum_of(i)].push_back(int(i));
  return members;
}

inline void check_treated_counts(const potential_table& table,
                                 const std::vector<int>& n_treated) {
  if (n_treated.size() != table.stratum_count())
    fail_validation(errc::weight_mismatch,
                    "treated counts do not cover the strata");
  for (std::size_t b = 0; b < n_treated.size(); ++b) {
    const int n = table.stratum_sizes()[b];
    if (n_treated[b] < 1 || n_treated[b] >= n)
      fail_validation(errc::degenerate_stratum,
                      "stratum " + table.stratum_ids()[b] +
                          " needs between 1 and n-1 treated clusters");
  }
}

}  // namespace detail

// Complete randomization within each stratum: exactly n_treated[b] of the
// clusters of stratum b are assigned to treatment. Each stratum draws from
// its own substream of (seed, replicate), so assignments are reproducible
// regardless of evaluation order.
inline std::vector<int> assign_within_strata(const potential_table& table,
                                             const std::vector<int>& n_treated,
                                             std::uint64_t seed,
                                             std::uint64_t replicate = 0) {
  detail::check_treated_counts(table, n_treated);
  const auto members = detail::stratum_members(table);
  std::vector<int> z(table.size(), 0);
  for (std::size_t b = 0; b < members.size(); ++b) {
    rng stream = rng::substream(seed, replicate, std::uint64_t(b));
    std::vector<int> idx = members[b];
    const int k = n_treated[b];
    // partial Fisher-Yates: the first k slots become the treated set
    for (int j = 0; j < k; ++j) {
      const std::uint64_t pick =
          std::uint64_t(j) + stream.below(std::uint64_t(idx.size() - j));
      std::swap(idx[j], idx[pick]);
      z[idx[j]] = 1;
    }
  }
  return z;
}

// Id-keyed flavor of the same draw.
inline assignment assignment_from_rows(const potential_table& table,
                                       const std::vector<int>& z_by_row) {
  assignment a;
  for (std::size_t i = 0; i < table.size(); ++i)
    a.emplace(table.rows()[i].cluster_id, z_by_row[i]);
  return a;
}

// Number of distinct within-stratum assignments: product over strata of
// C(n_b, k_b). Returned as a double to allow cap comparisons without
// overflow; exact for any value below the default cap.
inline double count_assignments(const potential_table& table,
                                const std::vector<int>& n_treated) {
  detail::check_treated_counts(table, n_treated);
  double total = 1.0;
  for (std::size_t b = 0; b < n_treated.size(); ++b) {
    const int n = table.stratum_sizes()[b];
    const int k = n_treated[b];
    double c = 1.0;
    for (int j = 0; j < k; ++j) c = c * double(n - j) / double(j + 1);
    total *= c;
    if (total > 1e18) return total;  // far past any usable cap
  }
  return total;
}

// Exhaustive enumeration of within-stratum assignments in a fixed order:
// per-stratum combinations advance lexicographically, with the last stratum
// varying fastest. Usage:
//   assignment_enumerator e(table, ks, cap);
//   std::vector<int> z;
//   while (e.next(z)) { ... }
class assignment_enumerator {
 public:
  static constexpr double default_cap = 1e7;

  assignment_enumerator(const potential_table& table,
                        const std::vector<int>& n_treated,
                        double cap = default_cap)
      : members_(detail::stratum_members(table)), n_treated_(n_treated) {
    detail::check_treated_counts(table, n_treated);
    total_ = count_assignments(table, n_treated);
    if (total_ > cap)
      fail_validation(errc::too_many_assignments,
                      "enumeration would cover " +
                          std::to_string(std::uint64_t(total_)) +
                          " assignments, above the cap of " +
                          std::to_string(std::uint64_t(cap)));
    combos_.resize(members_.size());
    for (std::size_t b = 0; b < members_.size(); ++b) {
      combos_[b].resize(n_treated_[b]);
      std::iota(combos_[b].begin(), combos_[b].end(), 0);
    }
    rows_ = 0;
    for (const auto& m : members_) rows_ += m.size();
  }

  double total() const noexcept { return total_; }

  bool next(std::vector<int>& z_by_row) {
    if (done_) return false;
    z_by_row.assign(rows_, 0);
    for (std::size_t b = 0; b < members_.size(); ++b)
      for (int slot : combos_[b]) z_by_row[members_[b][slot]] = 1;
    advance();
    return true;
  }

 private:
  // lexicographic successor of combos_[b]; false when it wraps to the start
  bool bump(std::size_t b) {
    std::vector<int>& c = combos_[b];
    const int n = int(members_[b].size());
    const int k = int(c.size());
    int j = k - 1;
    while (j >= 0 && c[j] == n - k + j) --j;
    if (j < 0) {
      std::iota(c.begin(), c.end(), 0);
      return false;
    }
    c[j] += 1;
    for (int t = j + 1; t < k; ++t) c[t] = c[t - 1] + 1;
    return true;
  }

  void advance() {
    for (std::size_t b = members_.size(); b-- > 0;) {
      if (bump(b)) return;
    }
    done_ = true;
  }

  std::vector<std::vector<int>> members_;
  std::vector<int> n_treated_;
  std::vector<std::vector<int>> combos_;
  std::size_t rows_ = 0;
  double total_ = 0.0;
  bool done_ = false;
};

}  // namespace hajek
