#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "hajek/core.hpp"
#include "hajek/error.hpp"
#include "hajek/estimators.hpp"
#include "hajek/linalg.hpp"

namespace hajek {

// Centered, size-scaled pseudo-outcomes: for a unit in stratum b observed
// under arm z, gamma = n_b * w * (y - r_z). Arm means of these within a
// stratum reproduce the inverse-probability-weighted stratum sums, which is
// what makes stratum-level variance estimation tractable.
inline std::vector<double> gamma_pseudo(const experiment_data& data, double r1,
                                        double r0) {
  std::vector<double> g(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const cluster_obs& u = data.units()[i];
    const double r = u.z == 1 ? r1 : r0;
    g[i] = data.layout_of(i).n * u.weight * (u.y - r);
  }
  return g;
}

namespace detail {

struct gamma_arm {
  std::vector<double> treated;
  std::vector<double> control;
};

// Variance of one stratum's arm-mean difference when both arms have at
// least two clusters: within-arm sample variances scaled by arm size.
inline double nu_large_impl(std::span<const double> g1,
                            std::span<const double> g0,
                            const std::string& stratum_id) {
  const std::size_t n1 = g1.size(), n0 = g0.size();
  if (n1 < 2 || n0 < 2)
    fail_numeric(errc::arm_too_small,
                 "stratum " + stratum_id +
                     " needs two clusters per arm for the large-stratum form");
  double m1 = 0.0, m0 = 0.0;
  for (double v : g1) m1 += v;
  for (double v : g0) m0 += v;
  m1 /= double(n1);
  m0 /= double(n0);
  double s1 = 0.0, s0 = 0.0;
  for (double v : g1) s1 += (v - m1) * (v - m1);
  for (double v : g0) s0 += (v - m0) * (v - m0);
  return s1 / double(n1 - 1) / double(n1) + s0 / double(n0 - 1) / double(n0);
}

// Cross-arm form that stays defined with singleton arms: the mean squared
// cross-arm gap minus the within-arm scatter. Non-negative whenever one arm
// is a singleton; may go negative otherwise.
inline double nu_small_impl(std::span<const double> g1,
                            std::span<const double> g0) {
  const double n1 = double(g1.size()), n0 = double(g0.size());
  double s1 = 0.0, q1 = 0.0, s0 = 0.0, q0 = 0.0;
  for (double v : g1) {
    s1 += v;
    q1 += v * v;
  }
  for (double v : g0) {
    s0 += v;
    q0 += v * v;
  }
  // sum over all treated/control pairs of squared gaps, expanded.
  const double cross = n0 * q1 + n1 * q0 - 2.0 * s1 * s0;
  const double within1 = q1 - s1 * s1 / n1;
  const double within0 = q0 - s0 * s0 / n0;
  return cross / (n1 * n0) - within1 / n1 - within0 / n0;
}

// Same quantity written through the pooled sample variance of all observed
// gammas in the stratum; kept as an independent implementation for
// cross-checking.
inline double nu_small_pooled_impl(std::span<const double> g1,
                                   std::span<const double> g0) {
  const std::size_t n1 = g1.size(), n0 = g0.size(), n = n1 + n0;
  double mean = 0.0;
  for (double v : g1) mean += v;
  for (double v : g0) mean += v;
  mean /= double(n);
  double pooled = 0.0;
  for (double v : g1) pooled += (v - mean) * (v - mean);
  for (double v : g0) pooled += (v - mean) * (v - mean);
  pooled /= double(n - 1);  // sample variance of the pooled gammas

  double m1 = 0.0, m0 = 0.0;
  for (double v : g1) m1 += v;
  for (double v : g0) m0 += v;
  m1 /= double(n1);
  m0 /= double(n0);
  double within1 = 0.0, within0 = 0.0;
  for (double v : g1) within1 += (v - m1) * (v - m1);
  for (double v : g0) within0 += (v - m0) * (v - m0);

  const double pairs = 0.5 * double(n) * double(n - 1);
  return 2.0 / (double(n1) * double(n0)) * pairs * pooled -
         (1.0 / double(n1) + 1.0 / double(n0)) * (within1 + within0);
}

inline std::vector<gamma_arm> split_gammas(const experiment_data& data,
                                           double r1, double r0) {
  std::vector<gamma_arm> arms(data.strata().size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const cluster_obs& u = data.units()[i];
    const double g = data.layout_of(i).n * u.weight * (u.y - (u.z ? r1 : r0));
    if (u.z == 1)
      arms[data.stratum_of(i)].treated.push_back(g);
    else
      arms[data.stratum_of(i)].control.push_back(g);
  }
  return arms;
}

}  // namespace detail

// Public single-stratum forms, taking the observed gammas of one stratum.
inline double nu_large(std::span<const double> gamma_treated,
                       std::span<const double> gamma_control,
                       const std::string& stratum_id = "") {
  return detail::nu_large_impl(gamma_treated, gamma_control, stratum_id);
}

inline double nu_small(std::span<const double> gamma_treated,
                       std::span<const double> gamma_control) {
  if (gamma_treated.empty() || gamma_control.empty())
    fail_numeric(errc::empty_arm, "nu_small: empty arm");
  return detail::nu_small_impl(gamma_treated, gamma_control);
}

inline double nu_small_pooled(std::span<const double> gamma_treated,
                              std::span<const double> gamma_control) {
  if (gamma_treated.empty() || gamma_control.empty())
    fail_numeric(errc::empty_arm, "nu_small_pooled: empty arm");
  return detail::nu_small_pooled_impl(gamma_treated, gamma_control);
}

enum class variance_policy { automatic, force_small, force_large };

struct stratum_nu {
  std::string stratum_id;
  bool used_small = false;
  double value = 0.0;
};

struct variance_report {
  double v_hat = 0.0;  // sum of stratum terms / W^2, may be negative
  double se = 0.0;     // sqrt of v_hat clamped at zero
  bool clamped = false;
  std::vector<stratum_nu> per_stratum;
};

// Design-based variance estimate for the Hajek contrast, centered at
// (r1, r0). Under the automatic policy each stratum uses the within-arm
// form when both arms have >= 2 clusters and the cross-arm form otherwise.
inline variance_report variance_estimate(const experiment_data& data,
                                         double r1, double r0,
                                         variance_policy policy =
                                             variance_policy::automatic) {
  const auto arms = detail::split_gammas(data, r1, r0);
  variance_report rep;
  rep.per_stratum.reserve(arms.size());
  double total = 0.0;
  for (std::size_t b = 0; b < arms.size(); ++b) {
    const auto& a = arms[b];
    const std::string& sid = data.strata()[b].stratum_id;
    const bool large_ok = a.treated.size() >= 2 && a.control.size() >= 2;
    bool use_small = false;
    switch (policy) {
      case variance_policy::automatic:
        use_small = !large_ok;
        break;
      case variance_policy::force_small:
        use_small = true;
        break;
      case variance_policy::force_large:
        if (!large_ok)
          fail_numeric(errc::policy_infeasible,
                       "stratum " + sid +
                           " has a singleton arm; the large-stratum form "
                           "is infeasible");
        use_small = false;
        break;
    }
    const double v = use_small
                         ? detail::nu_small_impl(a.treated, a.control)
                         : detail::nu_large_impl(a.treated, a.control, sid);
    rep.per_stratum.push_back({sid, use_small, v});
    total += v;
  }
  const double w = data.total_weight();
  rep.v_hat = total / (w * w);
  rep.clamped = rep.v_hat < 0.0;
  rep.se = std::sqrt(std::max(rep.v_hat, 0.0));
  return rep;
}

// Convenience overload centered at the Hajek arm means.
inline variance_report variance_estimate(const experiment_data& data,
                                         variance_policy policy =
                                             variance_policy::automatic) {
  const hajek_fit f = hajek_estimate(data);
  return variance_estimate(data, f.rho1, f.rho0, policy);
}

// Population-level variance components of the gamma pseudo-outcomes,
// computable only with a full potential-outcome table. Combined as
// (sigma1_sq - 2*sigma01 + sigma0_sq) / W they give the large-sample
// variance of the Hajek contrast.
struct sigma_oracle {
  double sigma1_sq = 0.0;
  double sigma0_sq = 0.0;
  double sigma01 = 0.0;
  double tau_variance = 0.0;
};

inline sigma_oracle population_sigma(const potential_table& table,
                                     const std::vector<stratum_layout>& design) {
  if (design.size() != table.stratum_count())
    fail_validation(errc::weight_mismatch,
                    "design does not cover the table's strata");
  std::vector<int> treated_of(table.stratum_count(), -1);
  for (const stratum_layout& s : design) {
    int b = -1;
    for (std::size_t k = 0; k < table.stratum_count(); ++k)
      if (table.stratum_ids()[k] == s.stratum_id) {
        b = int(k);
        break;
      }
    if (b < 0)
      fail_validation(errc::unknown_unit,
                      "design names unknown stratum " + s.stratum_id);
    if (s.n != table.stratum_sizes()[b])
      fail_validation(errc::weight_mismatch,
                      "design size mismatch in stratum " + s.stratum_id);
    if (s.n_treated < 1 || s.n_treated >= s.n)
      fail_validation(errc::degenerate_stratum,
                      "stratum " + s.stratum_id +
                          " needs at least one cluster in each arm");
    treated_of[b] = s.n_treated;
  }

  const sate_components pop = sate(table);
  const double w = table.total_weight();
  const std::size_t nb = table.stratum_count();
  std::vector<double> s1(nb, 0.0), s0(nb, 0.0), s01(nb, 0.0);
  std::vector<double> m1(nb, 0.0), m0(nb, 0.0);
  std::vector<int> count(nb, 0);
  std::vector<std::vector<std::pair<double, double>>> gam(nb);
  for (std::size_t i = 0; i < table.size(); ++i) {
    const potential_row& r = table.rows()[i];
    const int b = table.stratum_of(i);
    const double n_b = table.stratum_sizes()[b];
    gam[b].push_back({n_b * r.weight * (r.y1 - pop.rho1),
                      n_b * r.weight * (r.y0 - pop.rho0)});
  }
  sigma_oracle out;
  for (std::size_t b = 0; b < nb; ++b) {
    const int n = table.stratum_sizes()[b];
    const int k = treated_of[b];
    double a1 = 0.0, a0 = 0.0;
    for (const auto& [g1, g0] : gam[b]) {
      a1 += g1;
      a0 += g0;
    }
    a1 /= n;
    a0 /= n;
    double v1 = 0.0, v0 = 0.0, c01 = 0.0;
    for (const auto& [g1, g0] : gam[b]) {
      v1 += (g1 - a1) * (g1 - a1);
      v0 += (g0 - a0) * (g0 - a0);
      c01 += (g1 - a1) * (g0 - a0);
    }
    v1 /= (n - 1);
    v0 /= (n - 1);
    c01 /= (n - 1);
    out.sigma1_sq += (1.0 / k - 1.0 / n) * v1 / w;
    out.sigma0_sq += (1.0 / (n - k) - 1.0 / n) * v0 / w;
    out.sigma01 += -c01 / n / w;
  }
  out.tau_variance =
      (out.sigma1_sq - 2.0 * out.sigma01 + out.sigma0_sq) / w;
  return out;
}

// HC2 sandwich variance of one coefficient of a weighted least-squares fit.
inline double hc2_coef_variance(const linalg::matrix& x,
                                std::span<const double> y,
                                std::span<const double> omega,
                                std::size_t coef_index) {
  const std::size_t n = x.rows(), k = x.cols();
  if (n < k + 1)
    fail_validation(errc::empty_input, "hc2: too few rows for the design");
  const linalg::wls_fit fit = linalg::wls(x, y, omega, linalg::on_singular::fail);
  const linalg::matrix& ainv = fit.xtwx_inv;
  linalg::matrix meat(k, k);
  std::vector<double> ax(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      for (std::size_t q = 0; q < k; ++q) acc += ainv(p, q) * x(i, q);
      ax[p] = acc;
    }
    double h = 0.0;
    for (std::size_t p = 0; p < k; ++p) h += x(i, p) * ax[p];
    h *= omega[i];
    if (h >= 1.0 - 1e-10)
      fail_numeric(errc::leverage_one,
                   "hc2: a unit has leverage one; its residual carries no "
                   "information");
    const double e = y[i] - linalg::fitted_value(x, i, fit.beta);
    const double s = omega[i] * omega[i] * e * e / (1.0 - h);
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t q = 0; q < k; ++q) meat(p, q) += s * x(i, p) * x(i, q);
  }
  double v = 0.0;
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t q = 0; q < k; ++q)
      v += ainv(coef_index, p) * meat(p, q) * ainv(q, coef_index);
  return v;
}

// HC2 variance of the treatment contrast from the two-column fit of y on
// {1, z} with weights w / pi. A conventional benchmark that ignores the
// stratified, finite-population structure.
inline double hc2_variance(const experiment_data& data) {
  const std::size_t n = data.size();
  if (n < 3) fail_validation(errc::empty_input, "hc2: need at least 3 clusters");
  linalg::matrix x(n, 2);
  std::vector<double> y(n), om(n);
  for (std::size_t i = 0; i < n; ++i) {
    const cluster_obs& u = data.units()[i];
    x(i, 0) = 1.0;
    x(i, 1) = double(u.z);
    y[i] = u.y;
    om[i] = u.weight * data.inv_pi(i);
  }
  return hc2_coef_variance(x, y, om, 1);
}

enum class nu_kind { small_form, large_form };

// Exact expectation bias of a stratum's variance estimator as an estimator
// of the randomization variance of the gamma arm-mean difference, computed
// from the stratum's full potential outcomes at centering (r1, r0).
inline double nu_bias_oracle(std::span<const potential_row> stratum, double r1,
                             double r0, nu_kind kind) {
  const std::size_t n = stratum.size();
  if (n < 2)
    fail_validation(errc::degenerate_stratum,
                    "bias oracle needs at least two clusters");
  std::vector<double> g1(n), g0(n);
  for (std::size_t i = 0; i < n; ++i) {
    g1[i] = double(n) * stratum[i].weight * (stratum[i].y1 - r1);
    g0[i] = double(n) * stratum[i].weight * (stratum[i].y0 - r0);
  }
  double m1 = 0.0, m0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    m1 += g1[i];
    m0 += g0[i];
  }
  m1 /= double(n);
  m0 /= double(n);
  if (kind == nu_kind::small_form) return (m1 - m0) * (m1 - m0);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (g1[i] - m1) - (g0[i] - m0);
    acc += d * d;
  }
  return acc / double(n) / double(n - 1);
}

}  // namespace hajek
