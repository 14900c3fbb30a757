#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "hajek/core.hpp"
#include "hajek/error.hpp"
#include "hajek/inference.hpp"
#include "hajek/linalg.hpp"
#include "hajek/variance.hpp"

namespace hajek {

// One individual inside a cluster: weight within the cluster total, outcome
// and covariates. Treatment is a cluster-level fact and must agree across a
// cluster's rows.
struct individual_obs {
  std::string stratum_id;
  std::string cluster_id;
  int z = 0;
  double weight = 1.0;
  double y = 0.0;
  std::vector<double> x;
};

// Validated individual-level data plus its cluster-level aggregation
// (cluster weight = sum of member weights, cluster outcome = weighted mean).
class individual_data {
 public:
  static individual_data build(std::vector<individual_obs> rows) {
    individual_data d;
    if (rows.empty()) fail_validation(errc::empty_input, "no individuals given");
    d.rows_ = std::move(rows);
    d.p_ = d.rows_.front().x.size();
    d.cluster_of_.reserve(d.rows_.size());

    struct agg {
      std::string stratum_id;
      int z = 0;
      double w = 0.0;
      double wy = 0.0;
    };
    std::vector<agg> clusters;
    std::vector<std::string> cluster_ids;
    std::unordered_map<std::string, int> lookup;
    for (const individual_obs& r : d.rows_) {
      detail::check_finite(r.weight, "weight in cluster " + r.cluster_id);
      detail::check_finite(r.y, "outcome in cluster " + r.cluster_id);
      if (r.weight < 0.0)
        fail_validation(errc::nonfinite_value,
                        "negative weight in cluster " + r.cluster_id);
      if (r.z != 0 && r.z != 1)
        fail_validation(errc::nonfinite_value,
                        "assignment must be 0 or 1 in cluster " + r.cluster_id);
      if (r.x.size() != d.p_)
        fail_validation(errc::weight_mismatch,
                        "covariate count differs in cluster " + r.cluster_id);
      for (double v : r.x)
        detail::check_finite(v, "covariate in cluster " + r.cluster_id);
      auto [it, fresh] =
          lookup.try_emplace(r.cluster_id, int(clusters.size()));
      if (fresh) {
        clusters.push_back({r.stratum_id, r.z, 0.0, 0.0});
        cluster_ids.push_back(r.cluster_id);
      }
      agg& a = clusters[it->second];
      if (a.stratum_id != r.stratum_id)
        fail_validation(errc::duplicate_unit,
                        "cluster " + r.cluster_id +
                            " appears in more than one stratum");
      if (a.z != r.z)
        fail_validation(errc::nonfinite_value,
                        "conflicting assignment within cluster " +
                            r.cluster_id);
      a.w += r.weight;
      a.wy += r.weight * r.y;
      d.cluster_of_.push_back(it->second);
    }
    std::vector<cluster_obs> units;
    units.reserve(clusters.size());
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      const agg& a = clusters[c];
      if (!(a.w > 0.0))
        fail_validation(errc::zero_total_weight,
                        "cluster " + cluster_ids[c] + " carries no weight");
      units.push_back({a.stratum_id, cluster_ids[c], a.w, a.z, a.wy / a.w});
    }
    d.clusters_ = experiment_data::build(std::move(units));
    return d;
  }

  std::span<const individual_obs> rows() const noexcept { return rows_; }
  const experiment_data& clusters() const noexcept { return clusters_; }
  int cluster_of(std::size_t row_index) const {
    return cluster_of_[row_index];
  }
  std::size_t n_covariates() const noexcept { return p_; }

 private:
  std::vector<individual_obs> rows_;
  std::vector<int> cluster_of_;
  experiment_data clusters_;
  std::size_t p_ = 0;
};

// Weight-weighted covariate means; subtracting them centers the covariates
// so the fitted intercepts read directly as adjusted arm means.
inline std::vector<double> center_covariates(const individual_data& data) {
  const std::size_t p = data.n_covariates();
  std::vector<double> offsets(p, 0.0);
  double wtot = 0.0;
  for (const individual_obs& r : data.rows()) {
    wtot += r.weight;
    for (std::size_t j = 0; j < p; ++j) offsets[j] += r.weight * r.x[j];
  }
  for (std::size_t j = 0; j < p; ++j) offsets[j] /= wtot;
  return offsets;
}

// Covariate-adjusted fit: weighted least squares of y on {1, z, centered x}
// with weights w / pi. Collinear covariate columns are dropped; intercept
// and treatment must survive. beta holds the covariate coefficients on the
// centered scale.
struct adjusted_fit {
  double tau = 0.0;
  double rho1 = 0.0;
  double rho0 = 0.0;
  std::vector<double> beta;
  std::vector<double> offsets;
  std::vector<bool> covariate_kept;
  int n_kept_covariates = 0;
};

inline adjusted_fit fit_adjusted(const individual_data& data) {
  const std::size_t n = data.rows().size();
  const std::size_t p = data.n_covariates();
  const std::vector<double> offsets = center_covariates(data);

  linalg::matrix x(n, 2 + p);
  std::vector<double> y(n), om(n);
  for (std::size_t i = 0; i < n; ++i) {
    const individual_obs& r = data.rows()[i];
    const int c = data.cluster_of(i);
    x(i, 0) = 1.0;
    x(i, 1) = double(r.z);
    for (std::size_t j = 0; j < p; ++j) x(i, 2 + j) = r.x[j] - offsets[j];
    y[i] = r.y;
    om[i] = r.weight * data.clusters().inv_pi(std::size_t(c));
  }
  const linalg::wls_fit w =
      linalg::wls(x, y, om, linalg::on_singular::drop_columns, 1e-10);
  if (!w.kept[0] || !w.kept[1])
    fail_numeric(errc::singular_design,
                 "treatment contrast is not estimable from this design");

  adjusted_fit out;
  out.rho0 = w.beta[0];
  out.rho1 = w.beta[0] + w.beta[1];
  out.tau = w.beta[1];
  out.beta.assign(w.beta.begin() + 2, w.beta.end());
  out.offsets = offsets;
  out.covariate_kept.assign(w.kept.begin() + 2, w.kept.end());
  for (bool k : out.covariate_kept) out.n_kept_covariates += k ? 1 : 0;
  return out;
}

namespace detail {

// Cluster-level data with outcomes replaced by weighted means of the
// covariate-residualized individual outcomes. The adjusted variance and
// score statistics are the unadjusted machinery applied to these.
inline experiment_data residualized_clusters(const individual_data& data,
                                             const adjusted_fit& fit) {
  const std::size_t p = data.n_covariates();
  std::vector<double> resid_total(data.clusters().size(), 0.0);
  for (std::size_t i = 0; i < data.rows().size(); ++i) {
    const individual_obs& r = data.rows()[i];
    double xb = 0.0;
    for (std::size_t j = 0; j < p; ++j)
      xb += (r.x[j] - fit.offsets[j]) * fit.beta[j];
    resid_total[data.cluster_of(i)] += r.weight * (r.y - xb);
  }
  std::vector<cluster_obs> units(data.clusters().units().begin(),
                                 data.clusters().units().end());
  for (std::size_t c = 0; c < units.size(); ++c)
    units[c].y = resid_total[c] / units[c].weight;
  return experiment_data::build(std::move(units));
}

}  // namespace detail

// Design-based variance of the adjusted contrast, centered at the adjusted
// arm means. With no covariates this is exactly the unadjusted estimate.
inline variance_report adjusted_variance(const individual_data& data,
                                         const adjusted_fit& fit,
                                         variance_policy policy =
                                             variance_policy::automatic) {
  const experiment_data resid = detail::residualized_clusters(data, fit);
  return variance_estimate(resid, fit.rho1, fit.rho0, policy);
}

// Score test of the constant-attribution null on the adjusted scale. The
// null imputation means come from the raw cluster outcomes; the gammas use
// the residualized outcomes.
inline test_result adjusted_score_test(const individual_data& data,
                                       const adjusted_fit& fit, double tau0,
                                       double alpha = 0.05,
                                       variance_policy policy =
                                           variance_policy::automatic) {
  const experiment_data resid = detail::residualized_clusters(data, fit);
  std::vector<double> y_resid(resid.size());
  for (std::size_t i = 0; i < resid.size(); ++i)
    y_resid[i] = resid.units()[i].y;
  const detail::score_machine m(data.clusters(), std::move(y_resid), policy);
  const null_means h = null_imputation(data.clusters(), tau0);
  const detail::score_eval e = m.eval(h.rho1, h.rho0);
  return detail::score_result(e.statistic, tau0, alpha, "score_adjusted");
}

inline test_result adjusted_score_test(const individual_data& data,
                                       double tau0, double alpha = 0.05,
                                       variance_policy policy =
                                           variance_policy::automatic) {
  return adjusted_score_test(data, fit_adjusted(data), tau0, alpha, policy);
}

inline interval adjusted_score_ci(const individual_data& data,
                                  const adjusted_fit& fit, double alpha = 0.05,
                                  variance_policy policy =
                                      variance_policy::automatic) {
  const experiment_data resid = detail::residualized_clusters(data, fit);
  std::vector<double> y_resid(resid.size());
  for (std::size_t i = 0; i < resid.size(); ++i)
    y_resid[i] = resid.units()[i].y;
  const detail::score_machine m(data.clusters(), std::move(y_resid), policy);
  const variance_report vr =
      variance_estimate(resid, fit.rho1, fit.rho0, policy);
  const double zcrit = std_normal_quantile(1.0 - alpha / 2.0);
  auto rejects = [&](double t0) {
    const null_means h = null_imputation(data.clusters(), t0);
    return m.eval(h.rho1, h.rho0).statistic > zcrit;
  };
  return detail::invert_test(rejects, fit.tau, vr.se, 1.0 - alpha,
                             "score_adjusted");
}

// Wald interval on the adjusted contrast; default reference is t with
// (clusters - 2 - kept covariates) degrees of freedom.
inline interval adjusted_wald_ci(const individual_data& data,
                                 const adjusted_fit& fit, double alpha = 0.05,
                                 variance_policy policy =
                                     variance_policy::automatic) {
  const variance_report vr = adjusted_variance(data, fit, policy);
  const df_choice df =
      df_choice::cluster_default(data.clusters(), fit.n_kept_covariates);
  const double q = student_t_quantile(1.0 - alpha / 2.0, df.df);
  interval out;
  out.lo = fit.tau - q * vr.se;
  out.hi = fit.tau + q * vr.se;
  out.level = 1.0 - alpha;
  out.method = "wald_t(" + std::to_string(df.df) + ")_adjusted";
  return out;
}

}  // namespace hajek
