#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hajek/error.hpp"

namespace hajek {

// One cluster (the unit of randomization) as observed in an experiment:
// its stratum, a unique id, its size/weight, assigned arm and realized
// aggregate outcome.
struct cluster_obs {
  std::string stratum_id;
  std::string cluster_id;
  double weight = 0.0;
  int z = 0;  // 0 = control, 1 = treatment
  double y = 0.0;
};

// Realized design of one stratum: how many clusters it holds and how many
// were assigned to treatment.
struct stratum_layout {
  std::string stratum_id;
  int n = 0;
  int n_treated = 0;

  int n_control() const noexcept { return n - n_treated; }
  // Marginal assignment probability for arm z under complete randomization
  // within the stratum.
  double pi(int z) const noexcept {
    return z == 1 ? double(n_treated) / double(n)
                  : double(n_control()) / double(n);
  }
};

namespace detail {

inline void check_finite(double v, const std::string& what) {
  if (!std::isfinite(v))
    fail_validation(errc::nonfinite_value, "non-finite " + what);
}

}  // namespace detail

// A validated stratified cluster-randomized data set. Units keep input
// order; strata are recorded in order of first appearance. Construction
// guarantees: non-empty, unique cluster ids, finite values, weights >= 0
// with a positive total, and at least one cluster per arm in every stratum.
class experiment_data {
 public:
  static experiment_data build(std::vector<cluster_obs> units) {
    experiment_data d;
    if (units.empty()) fail_validation(errc::empty_input, "no clusters given");
    d.units_ = std::move(units);
    d.stratum_index_.reserve(d.units_.size());
    std::unordered_set<std::string> seen_cluster;
    seen_cluster.reserve(d.units_.size());
    for (const cluster_obs& u : d.units_) {
      detail::check_finite(u.weight, "weight for cluster " + u.cluster_id);
      detail::check_finite(u.y, "outcome for cluster " + u.cluster_id);
      if (u.weight < 0.0)
        fail_validation(errc::nonfinite_value,
                        "negative weight for cluster " + u.cluster_id);
      if (u.z != 0 && u.z != 1)
        fail_validation(errc::nonfinite_value,
                        "assignment must be 0 or 1 for cluster " + u.cluster_id);
      if (!seen_cluster.insert(u.cluster_id).second)
        fail_validation(errc::duplicate_unit,
                        "duplicate cluster id " + u.cluster_id);
      auto [it, fresh] = d.stratum_lookup_.try_emplace(
          u.stratum_id, static_cast<int>(d.strata_.size()));
      if (fresh) d.strata_.push_back({u.stratum_id, 0, 0});
      stratum_layout& s = d.strata_[it->second];
      s.n += 1;
      s.n_treated += u.z;
      d.stratum_index_.push_back(it->second);
      d.total_weight_ += u.weight;
    }
    if (!(d.total_weight_ > 0.0))
      fail_validation(errc::zero_total_weight, "total weight must be positive");
    for (const stratum_layout& s : d.strata_) {
      if (s.n < 2 || s.n_treated < 1 || s.n_control() < 1)
        fail_validation(errc::degenerate_stratum,
                        "stratum " + s.stratum_id +
                            " needs at least one cluster in each arm");
    }
    return d;
  }

  std::span<const cluster_obs> units() const noexcept { return units_; }
  const std::vector<stratum_layout>& strata() const noexcept { return strata_; }
  int stratum_of(std::size_t unit_index) const {
    return stratum_index_[unit_index];
  }
  const stratum_layout& layout_of(std::size_t unit_index) const {
    return strata_[stratum_index_[unit_index]];
  }
  double total_weight() const noexcept { return total_weight_; }
  std::size_t size() const noexcept { return units_.size(); }

  // Inverse assignment probability of the arm the unit actually entered.
  double inv_pi(std::size_t unit_index) const {
    const cluster_obs& u = units_[unit_index];
    return 1.0 / layout_of(unit_index).pi(u.z);
  }

 private:
  std::vector<cluster_obs> units_;
  std::vector<int> stratum_index_;
  std::vector<stratum_layout> strata_;
  std::unordered_map<std::string, int> stratum_lookup_;
  double total_weight_ = 0.0;
};

// One row of a fully specified finite population: both potential outcomes
// of a cluster, under control (y0) and under treatment (y1).
struct potential_row {
  std::string stratum_id;
  std::string cluster_id;
  double weight = 0.0;
  double y0 = 0.0;
  double y1 = 0.0;
};

// A validated potential-outcome table. Same ordering conventions as
// experiment_data; every stratum must hold at least two clusters so that
// within-stratum randomization is possible.
class potential_table {
 public:
  static potential_table build(std::vector<potential_row> rows) {
    potential_table t;
    if (rows.empty()) fail_validation(errc::empty_input, "no clusters given");
    t.rows_ = std::move(rows);
    t.stratum_index_.reserve(t.rows_.size());
    std::unordered_set<std::string> seen_cluster;
    seen_cluster.reserve(t.rows_.size());
    for (const potential_row& r : t.rows_) {
      detail::check_finite(r.weight, "weight for cluster " + r.cluster_id);
      detail::check_finite(r.y0, "y0 for cluster " + r.cluster_id);
      detail::check_finite(r.y1, "y1 for cluster " + r.cluster_id);
      if (r.weight < 0.0)
        fail_validation(errc::nonfinite_value,
                        "negative weight for cluster " + r.cluster_id);
      if (!seen_cluster.insert(r.cluster_id).second)
        fail_validation(errc::duplicate_unit,
                        "duplicate cluster id " + r.cluster_id);
      auto [it, fresh] = t.stratum_lookup_.try_emplace(
          r.stratum_id, static_cast<int>(t.stratum_sizes_.size()));
      if (fresh) {
        t.stratum_ids_.push_back(r.stratum_id);
        t.stratum_sizes_.push_back(0);
      }
      t.stratum_sizes_[it->second] += 1;
      t.stratum_index_.push_back(it->second);
      t.total_weight_ += r.weight;
    }
    if (!(t.total_weight_ > 0.0))
      fail_validation(errc::zero_total_weight, "total weight must be positive");
    for (std::size_t b = 0; b < t.stratum_sizes_.size(); ++b) {
      if (t.stratum_sizes_[b] < 2)
        fail_validation(errc::degenerate_stratum,
                        "stratum " + t.stratum_ids_[b] +
                            " needs at least two clusters");
    }
    return t;
  }

  std::span<const potential_row> rows() const noexcept { return rows_; }
  const std::vector<std::string>& stratum_ids() const noexcept {
    return stratum_ids_;
  }
  const std::vector<int>& stratum_sizes() const noexcept {
    return stratum_sizes_;
  }
  int stratum_of(std::size_t row_index) const {
    return stratum_index_[row_index];
  }
  std::size_t stratum_count() const noexcept { return stratum_ids_.size(); }
  double total_weight() const noexcept { return total_weight_; }
  std::size_t size() const noexcept { return rows_.size(); }

 private:
  std::vector<potential_row> rows_;
  std::vector<int> stratum_index_;
  std::vector<std::string> stratum_ids_;
  std::vector<int> stratum_sizes_;
  std::unordered_map<std::string, int> stratum_lookup_;
  double total_weight_ = 0.0;
};

// Weight-averaged potential outcomes and their contrast: the estimand.
struct sate_components {
  double tau = 0.0;
  double rho1 = 0.0;
  double rho0 = 0.0;
};

// Size-weighted average treatment effect over the whole population.
inline sate_components sate(const potential_table& table) {
  double sw1 = 0.0, sw0 = 0.0;
  for (const potential_row& r : table.rows()) {
    sw1 += r.weight * r.y1;
    sw0 += r.weight * r.y0;
  }
  const double w = table.total_weight();
  sate_components out;
  out.rho1 = sw1 / w;
  out.rho0 = sw0 / w;
  out.tau = out.rho1 - out.rho0;
  return out;
}

// Map from cluster id to assigned arm.
using assignment = std::map<std::string, int>;

// Reveal one potential outcome per cluster according to `a`. Every cluster
// must be assigned, ids must match the table, and the realized design must
// keep both arms non-empty in every stratum.
inline experiment_data observe(const potential_table& table,
                               const assignment& a) {
  std::vector<cluster_obs> units;
  units.reserve(table.size());
  for (const potential_row& r : table.rows()) {
    auto it = a.find(r.cluster_id);
    if (it == a.end())
      fail_validation(errc::missing_assignment,
                      "no assignment for cluster " + r.cluster_id);
    const int z = it->second;
    if (z != 0 && z != 1)
      fail_validation(errc::nonfinite_value,
                      "assignment must be 0 or 1 for cluster " + r.cluster_id);
    units.push_back({r.stratum_id, r.cluster_id, r.weight, z,
                     z == 1 ? r.y1 : r.y0});
  }
  if (a.size() != table.size()) {
    for (const auto& [id, z] : a) {
      (void)z;
      bool known = false;
      for (const potential_row& r : table.rows())
        if (r.cluster_id == id) { known = true; break; }
      if (!known)
        fail_validation(errc::unknown_unit,
                        "assignment names unknown cluster " + id);
    }
  }
  return experiment_data::build(std::move(units));
}

// Positional variant for hot loops: z_by_row[i] pairs with table.rows()[i].
inline experiment_data observe(const potential_table& table,
                               std::span<const int> z_by_row) {
  if (z_by_row.size() != table.size())
    fail_validation(errc::missing_assignment,
                    "assignment length does not match table");
  std::vector<cluster_obs> units;
  units.reserve(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    const potential_row& r = table.rows()[i];
    const int z = z_by_row[i];
    if (z != 0 && z != 1)
      fail_validation(errc::nonfinite_value,
                      "assignment must be 0 or 1 for cluster " + r.cluster_id);
    units.push_back({r.stratum_id, r.cluster_id, r.weight, z,
                     z == 1 ? r.y1 : r.y0});
  }
  return experiment_data::build(std::move(units));
}

// Kish effective sample size of the weight vector: (sum w)^2 / sum w^2.
// Equals the number of units when weights are equal, and drops toward 1 as
// the weights concentrate.
inline double kish_ess(const experiment_data& data) {
  double sw = 0.0, sww = 0.0;
  for (const cluster_obs& u : data.units()) {
    sw += u.weight;
    sww += u.weight * u.weight;
  }
  if (!(sww > 0.0))
    fail_validation(errc::zero_total_weight, "all weights are zero");
  return sw * sw / sww;
}

}  // namespace hajek
