#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hajek/core.hpp"
#include "hajek/dist.hpp"
#include "hajek/error.hpp"
#include "hajek/variance.hpp"

namespace hajek {

struct test_result {
  double statistic = 0.0;
  double p_value = 1.0;
  bool reject = false;
  double tau0 = 0.0;
  double alpha = 0.05;
  std::string method;
};

struct interval {
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;
  std::string method;
  std::vector<std::string> flags;
};

// Outcome means imputed under the constant-attribution null tau = tau0:
// each arm's unobserved counterpart is shifted by tau0 from the observed
// weighted arm means.
struct null_means {
  double rho1 = 0.0;
  double rho0 = 0.0;
};

inline null_means null_imputation(const experiment_data& data, double tau0) {
  double w1 = 0.0, wy1 = 0.0, w0 = 0.0, wy0 = 0.0;
  for (const cluster_obs& u : data.units()) {
    if (u.z == 1) {
      w1 += u.weight;
      wy1 += u.weight * u.y;
    } else {
      w0 += u.weight;
      wy0 += u.weight * u.y;
    }
  }
  if (!(w1 > 0.0) || !(w0 > 0.0))
    fail_numeric(errc::empty_arm, "an arm carries no weight");
  const double w = w1 + w0;
  const double m1 = wy1 / w1, m0 = wy0 / w0;
  null_means out;
  out.rho1 = (w0 / w) * (m0 + tau0) + (w1 / w) * m1;
  out.rho0 = (w0 / w) * m0 + (w1 / w) * (m1 - tau0);
  return out;
}

namespace detail {

// Precomputed per-stratum-arm moments of the gamma pseudo-outcomes as
// polynomials in the centering value r, so one evaluation of the score
// statistic costs O(#strata) no matter how often the confidence-interval
// inversion calls it. For arm z of stratum b with members i:
//   sum gamma_i(r)   = a - r * b_
//   sum gamma_i(r)^2 = q - 2 r * rr + r^2 * s
// where gamma_i(r) = n_b w_i (y_i - r).
struct arm_moments {
  int cnt = 0;
  double a = 0.0, b_ = 0.0, q = 0.0, rr = 0.0, s = 0.0;

  void add(double nb_w, double y) {
    const double g = nb_w * y;
    cnt += 1;
    a += g;
    b_ += nb_w;
    q += g * g;
    rr += g * nb_w;
    s += nb_w * nb_w;
  }
  double sum(double r) const { return a - r * b_; }
  double sumsq(double r) const { return q - 2.0 * r * rr + r * r * s; }
};

struct score_eval {
  double numerator = 0.0;   // sum over strata of gamma arm-mean differences
  double nu_total = 0.0;    // sum over strata of variance terms
  double statistic = 0.0;
};

// Score-test engine. `y` drives the gamma pseudo-outcomes; the null
// imputation means are supplied by the caller (they come from the raw
// outcomes even when the gammas are residualized).
class score_machine {
 public:
  score_machine(const experiment_data& data, variance_policy policy)
      : score_machine(data, [&] {
          std::vector<double> y(data.size());
          for (std::size_t i = 0; i < data.size(); ++i)
            y[i] = data.units()[i].y;
          return y;
        }(), policy) {}

  score_machine(const experiment_data& data, std::vector<double> y,
                variance_policy policy)
      : policy_(policy) {
    const std::size_t nb = data.strata().size();
    t_.resize(nb);
    c_.resize(nb);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const cluster_obs& u = data.units()[i];
      const int b = data.stratum_of(i);
      const double nb_w = double(data.strata()[b].n) * u.weight;
      (u.z == 1 ? t_[b] : c_[b]).add(nb_w, y[i]);
    }
    if (policy == variance_policy::force_large)
      for (std::size_t b = 0; b < nb; ++b)
        if (t_[b].cnt < 2 || c_[b].cnt < 2)
          fail_numeric(errc::policy_infeasible,
                       "stratum " + data.strata()[b].stratum_id +
                           " has a singleton arm; the large-stratum form is "
                           "infeasible");
  }

  score_eval eval(double r1, double r0) const {
    score_eval e;
    for (std::size_t b = 0; b < t_.size(); ++b) {
      const arm_moments& t = t_[b];
      const arm_moments& c = c_[b];
      const double n1 = double(t.cnt), n0 = double(c.cnt);
      const double s1 = t.sum(r1), s0 = c.sum(r0);
      const double q1 = t.sumsq(r1), q0 = c.sumsq(r0);
      e.numerator += s1 / n1 - s0 / n0;
      const bool large_ok = t.cnt >= 2 && c.cnt >= 2;
      const bool use_small =
          policy_ == variance_policy::force_small || !large_ok;
      const double within1 = q1 - s1 * s1 / n1;
      const double within0 = q0 - s0 * s0 / n0;
      if (use_small) {
        const double cross = n0 * q1 + n1 * q0 - 2.0 * s1 * s0;
        e.nu_total += cross / (n1 * n0) - within1 / n1 - within0 / n0;
      } else {
        e.nu_total += within1 / (n1 - 1.0) / n1 + within0 / (n0 - 1.0) / n0;
      }
    }
    if (e.nu_total > 0.0) {
      e.statistic = std::fabs(e.numerator) / std::sqrt(e.nu_total);
    } else {
      e.statistic = e.numerator == 0.0
                        ? 0.0
                        : std::numeric_limits<double>::infinity();
    }
    return e;
  }

 private:
  variance_policy policy_;
  std::vector<arm_moments> t_, c_;
};

inline test_result score_result(double statistic, double tau0, double alpha,
                                const std::string& method) {
  test_result r;
  r.statistic = statistic;
  r.p_value = std::isinf(statistic)
                  ? 0.0
                  : 2.0 * (1.0 - std_normal_cdf(statistic));
  r.reject = r.statistic > std_normal_quantile(1.0 - alpha / 2.0);
  r.tau0 = tau0;
  r.alpha = alpha;
  r.method = method;
  return r;
}

// Shared confidence-interval inversion: expand outward from `center` in
// Wald-SE steps until the test rejects, bisect each boundary to 1e-8, then
// scan the bracketed range for interior rejections (the acceptance region
// of a score test need not be an interval; if it is not, the hull is
// returned and flagged).
template <typename RejectFn>
interval invert_test(RejectFn&& rejects, double center, double se,
                     double level, const std::string& method) {
  interval out;
  out.level = level;
  out.method = method;
  const double step = se > 0.0 ? se : std::max(1e-8, 1e-8 * std::fabs(center));

  double seed = center;
  if (rejects(seed)) {
    bool found = false;
    const double fine = step / 50.0;
    for (int j = 1; j <= 500 && !found; ++j) {
      if (!rejects(center + j * fine)) {
        seed = center + j * fine;
        found = true;
      } else if (!rejects(center - j * fine)) {
        seed = center - j * fine;
        found = true;
      }
    }
    if (!found)
      fail_numeric(errc::no_acceptance_point,
                   "no accepted value found near the point estimate");
  }

  const int max_steps = 1000;
  auto find_edge = [&](double direction) {
    double inside = seed;
    double outside = 0.0;
    bool bracketed = false;
    for (int k = 1; k <= max_steps; ++k) {
      const double cand = seed + direction * double(k) * step;
      if (rejects(cand)) {
        outside = cand;
        bracketed = true;
        break;
      }
      inside = cand;
    }
    if (!bracketed) {
      out.flags.push_back(direction > 0 ? "unbounded_above"
                                        : "unbounded_below");
      return inside;
    }
    for (int it = 0; it < 200; ++it) {
      if (std::fabs(outside - inside) <= 1e-8) break;
      const double mid = 0.5 * (inside + outside);
      if (rejects(mid))
        outside = mid;
      else
        inside = mid;
    }
    return 0.5 * (inside + outside);
  };

  out.lo = find_edge(-1.0);
  out.hi = find_edge(+1.0);
  if (out.lo > out.hi) std::swap(out.lo, out.hi);

  if (se > 0.0 && out.hi > out.lo) {
    const double fine = se / 50.0;
    for (double x = out.lo + fine; x < out.hi - 0.5 * fine; x += fine) {
      if (rejects(x)) {
        out.flags.push_back("non_interval_region");
        break;
      }
    }
  }
  return out;
}

}  // namespace detail

// Score test of the constant-attribution null tau = tau0: gammas are
// centered at outcome means imputed under the null, and the standardized
// stratum-sum contrast is referred to the normal distribution.
inline test_result score_test(const experiment_data& data, double tau0,
                              double alpha = 0.05,
                              variance_policy policy =
                                  variance_policy::automatic) {
  const detail::score_machine m(data, policy);
  const null_means h = null_imputation(data, tau0);
  const detail::score_eval e = m.eval(h.rho1, h.rho0);
  return detail::score_result(e.statistic, tau0, alpha, "score");
}

// Confidence interval from inverting the score test.
inline interval score_ci(const experiment_data& data, double alpha = 0.05,
                         variance_policy policy = variance_policy::automatic) {
  const detail::score_machine m(data, policy);
  const hajek_fit fit = hajek_estimate(data);
  const variance_report vr =
      variance_estimate(data, fit.rho1, fit.rho0, policy);
  const double zcrit = std_normal_quantile(1.0 - alpha / 2.0);
  auto rejects = [&](double t0) {
    const null_means h = null_imputation(data, t0);
    return m.eval(h.rho1, h.rho0).statistic > zcrit;
  };
  return detail::invert_test(rejects, fit.tau, vr.se, 1.0 - alpha, "score");
}

// Degrees-of-freedom choice for Wald intervals: normal reference, the
// cluster-count default n - 2, or an explicit value.
struct df_choice {
  bool use_z = false;
  int df = 0;

  static df_choice z() { return {true, 0}; }
  static df_choice t(int df) {
    if (df < 1) fail_numeric(errc::bad_df, "Wald t reference needs df >= 1");
    return {false, df};
  }
  static df_choice cluster_default(const experiment_data& data,
                                   int n_covariates = 0) {
    const int df = int(data.size()) - 2 - n_covariates;
    if (df < 1)
      fail_numeric(errc::bad_df, "too few clusters for a t reference");
    return {false, df};
  }
};

inline interval wald_ci(const experiment_data& data, double alpha,
                        const df_choice& df,
                        variance_policy policy = variance_policy::automatic) {
  const hajek_fit fit = hajek_estimate(data);
  const variance_report vr =
      variance_estimate(data, fit.rho1, fit.rho0, policy);
  const double q = df.use_z ? std_normal_quantile(1.0 - alpha / 2.0)
                            : student_t_quantile(1.0 - alpha / 2.0, df.df);
  interval out;
  out.lo = fit.tau - q * vr.se;
  out.hi = fit.tau + q * vr.se;
  out.level = 1.0 - alpha;
  out.method = df.use_z ? "wald_z" : "wald_t(" + std::to_string(df.df) + ")";
  return out;
}

inline interval wald_ci(const experiment_data& data, double alpha = 0.05) {
  return wald_ci(data, alpha, df_choice::cluster_default(data));
}

}  // namespace hajek
