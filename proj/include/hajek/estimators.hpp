#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "hajek/core.hpp"
#include "hajek/error.hpp"
#include "hajek/linalg.hpp"

namespace hajek {

// Ratio-estimator fit: per-arm weighted means and their contrast.
struct hajek_fit {
  double tau = 0.0;
  double rho1 = 0.0;
  double rho0 = 0.0;
};

// Hajek (self-normalized inverse-probability) estimator of the weighted
// average treatment effect. Each arm's mean reweights observed clusters by
// weight / assignment probability and normalizes by the same quantity, so
// the estimate is invariant to rescaling the weights.
inline hajek_fit hajek_estimate(const experiment_data& data) {
  double num1 = 0.0, den1 = 0.0, num0 = 0.0, den0 = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const cluster_obs& u = data.units()[i];
    const double ww = u.weight * data.inv_pi(i);
    if (u.z == 1) {
      num1 += ww * u.y;
      den1 += ww;
    } else {
      num0 += ww * u.y;
      den0 += ww;
    }
  }
  if (!(den1 > 0.0))
    fail_numeric(errc::empty_arm, "treatment arm carries no weight");
  if (!(den0 > 0.0))
    fail_numeric(errc::empty_arm, "control arm carries no weight");
  hajek_fit f;
  f.rho1 = num1 / den1;
  f.rho0 = num0 / den0;
  f.tau = f.rho1 - f.rho0;
  return f;
}

// Horvitz-Thompson estimator: inverse-probability weighted totals divided
// by the fixed population weight. Exactly unbiased over the randomization
// distribution, at the price of a random denominator-free scaling.
inline double horvitz_thompson(const experiment_data& data) {
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const cluster_obs& u = data.units()[i];
    const double v = u.weight * u.y * data.inv_pi(i);
    acc += (u.z == 1) ? v : -v;
  }
  return acc / data.total_weight();
}

// Normalized non-negative weights over strata.
class stratum_weights {
 public:
  static stratum_weights build(std::map<std::string, double> raw) {
    if (raw.empty()) fail_validation(errc::empty_input, "no stratum weights");
    double total = 0.0;
    for (const auto& [id, v] : raw) {
      detail::check_finite(v, "weight for stratum " + id);
      if (v < 0.0)
        fail_validation(errc::nonfinite_value,
                        "negative weight for stratum " + id);
      total += v;
    }
    if (!(total > 0.0))
      fail_validation(errc::zero_total_weight, "stratum weights sum to zero");
    stratum_weights out;
    for (auto& [id, v] : raw) out.w_.emplace(id, v / total);
    return out;
  }

  double at(const std::string& stratum_id) const {
    auto it = w_.find(stratum_id);
    if (it == w_.end())
      fail_validation(errc::weight_mismatch,
                      "no weight for stratum " + stratum_id);
    return it->second;
  }
  const std::map<std::string, double>& map() const noexcept { return w_; }

 private:
  std::map<std::string, double> w_;
};

namespace detail {

struct arm_sums {
  double w1 = 0.0, wy1 = 0.0, w0 = 0.0, wy0 = 0.0;
};

inline std::vector<arm_sums> per_stratum_arm_sums(const experiment_data& data) {
  std::vector<arm_sums> s(data.strata().size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const cluster_obs& u = data.units()[i];
    arm_sums& a = s[data.stratum_of(i)];
    if (u.z == 1) {
      a.w1 += u.weight;
      a.wy1 += u.weight * u.y;
    } else {
      a.w0 += u.weight;
      a.wy0 += u.weight * u.y;
    }
  }
  return s;
}

}  // namespace detail

// Weighted average of stratum-wise differences in (size-weighted) arm
// means: sum_b wtilde_b * (ybar_b1 - ybar_b0). The stratum weights are
// normalized; each stratum must carry weight in both arms.
inline double wasdom(const experiment_data& data, const stratum_weights& wt) {
  const auto sums = detail::per_stratum_arm_sums(data);
  double acc = 0.0;
  for (std::size_t b = 0; b < sums.size(); ++b) {
    const auto& a = sums[b];
    if (!(a.w1 > 0.0) || !(a.w0 > 0.0))
      fail_numeric(errc::empty_arm, "stratum " + data.strata()[b].stratum_id +
                                        " has an arm with no weight");
    acc += wt.at(data.strata()[b].stratum_id) * (a.wy1 / a.w1 - a.wy0 / a.w0);
  }
  return acc;
}

// Stratum weights proportional to total stratum weight (size).
inline stratum_weights size_weights(const experiment_data& data) {
  std::map<std::string, double> raw;
  for (const cluster_obs& u : data.units()) raw[u.stratum_id] += u.weight;
  return stratum_weights::build(std::move(raw));
}

inline stratum_weights size_weights(const potential_table& table) {
  std::map<std::string, double> raw;
  for (const potential_row& r : table.rows()) raw[r.stratum_id] += r.weight;
  return stratum_weights::build(std::move(raw));
}

// Difference-in-means with stratum weights proportional to stratum size;
// the common "weighted average of stratum effects" estimator.
inline double ikn(const experiment_data& data) {
  return wasdom(data, size_weights(data));
}

enum class fe_weighting { cluster_size, unweighted };

// Treatment coefficient of the least-squares fit of y on treatment plus a
// full set of stratum indicators. Stratum intercepts are absorbed by
// weighted within-stratum demeaning, so the cost stays linear in the number
// of clusters no matter how many strata there are. Weighted by cluster size
// by default; the unweighted variant is the textbook fixed-effects fit.
inline double fixed_effects(const experiment_data& data,
                            fe_weighting weighting = fe_weighting::cluster_size) {
  const std::size_t nb = data.strata().size();
  std::vector<double> sw(nb, 0.0), swz(nb, 0.0), swy(nb, 0.0), swzy(nb, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const cluster_obs& u = data.units()[i];
    const double om = weighting == fe_weighting::cluster_size ? u.weight : 1.0;
    const int b = data.stratum_of(i);
    sw[b] += om;
    swy[b] += om * u.y;
    if (u.z == 1) {
      swz[b] += om;
      swzy[b] += om * u.y;
    }
  }
  double num = 0.0, den = 0.0, scale = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    if (!(sw[b] > 0.0)) continue;  // weightless stratum contributes nothing
    num += swzy[b] - swz[b] * swy[b] / sw[b];
    den += swz[b] - swz[b] * swz[b] / sw[b];
    scale += sw[b];
  }
  if (!(den > 1e-12 * std::max(scale, 1.0)))
    fail_numeric(errc::singular_design,
                 "treatment indicator is collinear with strata");
  return num / den;
}

// Stratum weights proportional to the harmonic mean of the two cluster
// weights of each pair; this is the implied weighting of the fixed-effects
// fit on paired designs.
inline stratum_weights harmonic_pair_weights(const potential_table& table) {
  std::map<std::string, std::vector<double>> by_stratum;
  for (const potential_row& r : table.rows())
    by_stratum[r.stratum_id].push_back(r.weight);
  std::map<std::string, double> raw;
  for (const auto& [id, ws] : by_stratum) {
    if (ws.size() != 2)
      fail_validation(errc::not_paired, "stratum " + id + " is not a pair");
    const double s = ws[0] + ws[1];
    if (!(s > 0.0))
      fail_validation(errc::zero_total_weight,
                      "pair " + id + " carries no weight");
    raw[id] = 2.0 * ws[0] * ws[1] / s;
  }
  return stratum_weights::build(std::move(raw));
}

// The population quantity a weighted stratum-difference estimator aims at:
// the weighted average over strata of the size-weighted mean effect.
inline double wasdom_estimand(const potential_table& table,
                              const stratum_weights& wt) {
  std::map<std::string, double> wtau, wsum;
  for (const potential_row& r : table.rows()) {
    wtau[r.stratum_id] += r.weight * (r.y1 - r.y0);
    wsum[r.stratum_id] += r.weight;
  }
  double acc = 0.0;
  for (const auto& [id, num] : wtau) {
    if (!(wsum[id] > 0.0))
      fail_validation(errc::zero_total_weight,
                      "stratum " + id + " carries no weight");
    acc += wt.at(id) * (num / wsum[id]);
  }
  return acc;
}

enum class wasdom_kind { ikn, fe };

// Exact randomization bias, E[estimator] - estimand, of the size-weighted
// (ikn) or harmonically weighted (fe) stratum-difference estimator on a
// paired design. Under pair randomization each pair's estimate averages the
// two cluster effects equally, while the estimand weights them by size, so
// the bias reduces to a weight-effect covariance within pairs.
inline double wasdom_bias_oracle(const potential_table& table,
                                 wasdom_kind kind) {
  struct pair_info {
    double w[2] = {0.0, 0.0};
    double tau[2] = {0.0, 0.0};
    int count = 0;
  };
  std::map<std::string, pair_info> pairs;
  for (const potential_row& r : table.rows()) {
    pair_info& p = pairs[r.stratum_id];
    if (p.count >= 2)
      fail_validation(errc::not_paired,
                      "stratum " + r.stratum_id + " is not a pair");
    p.w[p.count] = r.weight;
    p.tau[p.count] = r.y1 - r.y0;
    p.count += 1;
  }
  double total_w = 0.0, harmonic_total = 0.0;
  for (const auto& [id, p] : pairs) {
    if (p.count != 2)
      fail_validation(errc::not_paired, "stratum " + id + " is not a pair");
    const double s = p.w[0] + p.w[1];
    if (!(s > 0.0))
      fail_validation(errc::zero_total_weight,
                      "pair " + id + " carries no weight");
    total_w += s;
    harmonic_total += 2.0 * p.w[0] * p.w[1] / s;
  }
  double bias = 0.0;
  for (const auto& [id, p] : pairs) {
    (void)id;
    // sum over the pair of (w - wbar)(tau - taubar)
    const double cross = 0.5 * (p.w[0] - p.w[1]) * (p.tau[0] - p.tau[1]);
    const double s = p.w[0] + p.w[1];
    if (kind == wasdom_kind::ikn) {
      bias += -cross / total_w;
    } else {
      const double h = 2.0 * p.w[0] * p.w[1] / s;
      bias += -(h / harmonic_total) * cross / s;
    }
  }
  return bias;
}

}  // namespace hajek
