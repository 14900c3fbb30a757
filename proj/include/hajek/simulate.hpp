#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "hajek/core.hpp"
#include "hajek/dist.hpp"
#include "hajek/error.hpp"
#include "hajek/estimators.hpp"
#include "hajek/inference.hpp"
#include "hajek/randomize.hpp"
#include "hajek/rng.hpp"
#include "hajek/variance.hpp"

namespace hajek::sim {

// ---------------------------------------------------------------------------
// Data-generating processes
// ---------------------------------------------------------------------------

enum class effect_kind {
  constant,         // every cluster gains `value`
  size_correlated,  // effect proportional to cluster weight
  stratified        // base effect plus across- and within-stratum spread
};

struct effect_model {
  effect_kind kind = effect_kind::constant;
  double value = 5.0;       // constant level / stratified base
  double alpha = 0.0;       // across-strata spread (stratified)
  double beta = 0.0;        // within-stratum spread (stratified)
  double size_slope = 1.0 / 6.0;  // slope on weight (size_correlated)
};

enum class treated_rule {
  balanced,         // half of each stratum treated
  unbalanced_half,  // one treated in the first half of strata, half in the rest
  one_fifth         // a fifth of each stratum treated
};

struct dgp_config {
  int n_strata = 10;
  int stratum_size = 2;
  bool size_matched = false;  // sort weights before forming strata
  effect_model effect;
  treated_rule rule = treated_rule::balanced;
  double weight_shape = 4.0;
  double weight_rate = 4.0 / 30.0;
  std::uint64_t seed = 1;
};

namespace detail {

inline std::string padded(const char* prefix, std::size_t value,
                          int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, value);
  return buf;
}

}  // namespace detail

inline std::vector<int> treated_counts(const dgp_config& cfg) {
  std::vector<int> ks(cfg.n_strata, 0);
  for (int b = 0; b < cfg.n_strata; ++b) {
    int k = 0;
    switch (cfg.rule) {
      case treated_rule::balanced:
        k = cfg.stratum_size / 2;
        break;
      case treated_rule::unbalanced_half:
        k = b < cfg.n_strata / 2 ? 1 : cfg.stratum_size / 2;
        break;
      case treated_rule::one_fifth:
        k = cfg.stratum_size / 5;
        break;
    }
    if (k < 1 || k >= cfg.stratum_size)
      fail_validation(errc::config_error,
                      "treated count infeasible for stratum size " +
                          std::to_string(cfg.stratum_size));
    ks[b] = k;
  }
  return ks;
}

// Synthetic population: gamma-distributed cluster weights (mean 30),
// normal-scores baseline outcomes with unit noise, and one of three effect
// patterns. With size_matched the weights are sorted first so that clusters
// of similar size share a stratum. Weight draws and outcome draws use
// separate substreams, so the two stages never interleave.
inline potential_table gen_population(const dgp_config& cfg) {
  if (cfg.n_strata < 1 || cfg.stratum_size < 2)
    fail_validation(errc::config_error,
                    "population needs >= 1 strata of >= 2 clusters");
  const std::size_t n = std::size_t(cfg.n_strata) * cfg.stratum_size;

  rng wstream = rng::substream(cfg.seed, 0, 1);
  std::vector<double> w(n);
  for (double& v : w) v = wstream.gamma(cfg.weight_shape, cfg.weight_rate);
  if (cfg.size_matched) std::sort(w.begin(), w.end());

  rng ostream = rng::substream(cfg.seed, 0, 2);
  std::vector<potential_row> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = i / cfg.stratum_size;      // 0-based stratum
    const std::size_t ib = i % cfg.stratum_size;     // 0-based slot in stratum
    const double base =
        std_normal_quantile(1.0 - double(i + 1) / double(n + 1));
    double t = 0.0;
    switch (cfg.effect.kind) {
      case effect_kind::constant:
        t = cfg.effect.value;
        break;
      case effect_kind::size_correlated:
        t = w[i] * cfg.effect.size_slope;
        break;
      case effect_kind::stratified:
        t = cfg.effect.value +
            cfg.effect.alpha * std_normal_quantile(
                                   1.0 - double(b + 1) /
                                             double(cfg.n_strata + 1)) +
            cfg.effect.beta * std_normal_quantile(
                                  1.0 - double(ib + 1) /
                                            double(cfg.stratum_size + 1));
        break;
    }
    // One shared noise draw per cluster: the two potential outcomes differ
    // by exactly t, so a zero-spread effect model keeps unit effects equal.
    const double eps = ostream.normal();
    const double y0 = base + eps;
    const double y1 = base + t + eps;
    rows.push_back({detail::padded("s", b + 1, 4),
                    detail::padded("c", i + 1, 6), w[i], y0, y1});
  }
  return potential_table::build(std::move(rows));
}

// ---------------------------------------------------------------------------
// Constructed populations from observed data
// ---------------------------------------------------------------------------

// Impute the missing potential outcome of every cluster under a constant
// cluster-total effect: a cluster of weight w gains delta_total units of
// outcome total, i.e. delta_total / w per weighted unit.
inline potential_table osnap_impute_constant_total(const experiment_data& data,
                                                   double delta_total) {
  std::vector<potential_row> rows;
  rows.reserve(data.size());
  for (const cluster_obs& u : data.units()) {
    if (!(u.weight > 0.0))
      fail_numeric(errc::domain_error,
                   "cluster " + u.cluster_id +
                       " has zero weight; a constant total effect is undefined");
    const double shift = delta_total / u.weight;
    if (u.z == 1)
      rows.push_back({u.stratum_id, u.cluster_id, u.weight, u.y - shift, u.y});
    else
      rows.push_back({u.stratum_id, u.cluster_id, u.weight, u.y, u.y + shift});
  }
  return potential_table::build(std::move(rows));
}

// k disjoint copies of a population with fresh ids; estimands are unchanged.
inline potential_table replicate_pairs(const potential_table& table, int k) {
  if (k < 1) fail_validation(errc::config_error, "need at least one copy");
  std::vector<potential_row> rows;
  rows.reserve(table.size() * std::size_t(k));
  for (int c = 0; c < k; ++c) {
    const std::string suffix = "_r" + detail::padded("", std::size_t(c + 1), 4);
    for (const potential_row& r : table.rows())
      rows.push_back({r.stratum_id + suffix, r.cluster_id + suffix, r.weight,
                      r.y0, r.y1});
  }
  return potential_table::build(std::move(rows));
}

// ---------------------------------------------------------------------------
// Replicate bookkeeping and metric reduction
// ---------------------------------------------------------------------------

struct estimator_metrics {
  double bias = 0.0;
  double sd = 0.0;
  double rmse = 0.0;
};

struct variance_metrics {
  double mean = 0.0;
  double relative_bias = 0.0;  // (mean - empirical variance) / empirical
  double sd = 0.0;
};

struct interval_metrics {
  double coverage = 0.0;
  double mean_length = 0.0;
};

struct sim_summary {
  std::string mode;  // "mc" or "exact"
  long n_replicates = 0;
  double truth = 0.0;
  double empirical_variance = 0.0;  // of the reference estimator
  std::map<std::string, estimator_metrics> estimators;
  std::map<std::string, variance_metrics> variances;
  std::map<std::string, interval_metrics> intervals;
};

struct replicate_set {
  double truth = 0.0;
  std::string mode = "mc";
  std::string reference = "hajek";
  std::map<std::string, std::vector<double>> estimates;
  std::map<std::string, std::vector<double>> variances;
  std::map<std::string, std::vector<interval>> intervals;
};

inline sim_summary compute_metrics(const replicate_set& reps) {
  std::size_t n = 0;
  for (const auto& [name, v] : reps.estimates) {
    (void)name;
    n = v.size();
    break;
  }
  if (n == 0)
    fail_validation(errc::empty_replicates, "no replicates to summarize");
  for (const auto& [name, v] : reps.estimates)
    if (v.size() != n)
      fail_validation(errc::empty_replicates,
                      "replicate count mismatch for estimator " + name);
  for (const auto& [name, v] : reps.variances)
    if (v.size() != n)
      fail_validation(errc::empty_replicates,
                      "replicate count mismatch for variance " + name);
  for (const auto& [name, v] : reps.intervals)
    if (v.size() != n)
      fail_validation(errc::empty_replicates,
                      "replicate count mismatch for interval " + name);

  auto mean_of = [n](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(n);
  };
  auto var_of = [n](const std::vector<double>& v, double m) {
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / double(n);  // population form over the replicate distribution
  };

  sim_summary out;
  out.mode = reps.mode;
  out.n_replicates = long(n);
  out.truth = reps.truth;
  for (const auto& [name, v] : reps.estimates) {
    const double m = mean_of(v);
    estimator_metrics em;
    em.bias = m - reps.truth;
    em.sd = std::sqrt(var_of(v, m));
    em.rmse = std::sqrt(em.bias * em.bias + em.sd * em.sd);
    out.estimators.emplace(name, em);
  }
  auto ref = reps.estimates.find(reps.reference);
  if (ref != reps.estimates.end()) {
    const double m = mean_of(ref->second);
    out.empirical_variance = var_of(ref->second, m);
  }
  for (const auto& [name, v] : reps.variances) {
    variance_metrics vm;
    vm.mean = mean_of(v);
    vm.sd = std::sqrt(var_of(v, vm.mean));
    vm.relative_bias = out.empirical_variance > 0.0
                           ? (vm.mean - out.empirical_variance) /
                                 out.empirical_variance
                           : 0.0;
    out.variances.emplace(name, vm);
  }
  for (const auto& [name, ivs] : reps.intervals) {
    interval_metrics im;
    for (const interval& iv : ivs) {
      im.coverage += (iv.lo <= reps.truth && reps.truth <= iv.hi) ? 1.0 : 0.0;
      im.mean_length += iv.hi - iv.lo;
    }
    im.coverage /= double(n);
    im.mean_length /= double(n);
    out.intervals.emplace(name, im);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parallel replicate loop (deterministic: slot-indexed results, per-replicate
// substreams; thread count only affects speed)
// ---------------------------------------------------------------------------

inline int thread_count() {
  if (const char* env = std::getenv("HAJEK_THREADS")) {
    const int k = std::atoi(env);
    if (k >= 1) return k;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : int(hw);
}

template <typename Fn>
void parallel_for(long n, int threads, Fn&& body) {
  if (threads <= 1 || n < 2) {
    for (long i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  const long chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const long lo = t * chunk;
    const long hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (long i = lo; i < hi; ++i) body(i);
    });
  }
  for (std::thread& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Study runners
// ---------------------------------------------------------------------------

struct run_options {
  enum class mode_t { monte_carlo, exact } mode = mode_t::monte_carlo;
  long n_replicates = 10000;
  std::uint64_t seed = 1;
  double enumeration_cap = assignment_enumerator::default_cap;
  double alpha = 0.05;
  int threads = 0;  // 0 = use thread_count()
};

// Point-estimator comparison: hajek, horvitz_thompson, ikn and fe on every
// replicate (or every assignment in exact mode).
inline sim_summary run_estimator_comparison(const potential_table& table,
                                            const std::vector<int>& n_treated,
                                            const run_options& opt) {
  replicate_set reps;
  reps.truth = sate(table).tau;
  auto eval_into = [&](const experiment_data& data, long slot) {
    reps.estimates["hajek"][slot] = hajek_estimate(data).tau;
    reps.estimates["horvitz_thompson"][slot] = horvitz_thompson(data);
    reps.estimates["ikn"][slot] = ikn(data);
    reps.estimates["fe"][slot] = fixed_effects(data);
  };
  if (opt.mode == run_options::mode_t::exact) {
    assignment_enumerator e(table, n_treated, opt.enumeration_cap);
    const long total = long(e.total());
    for (const char* name : {"hajek", "horvitz_thompson", "ikn", "fe"})
      reps.estimates[name].resize(total);
    std::vector<int> z;
    long slot = 0;
    while (e.next(z)) eval_into(observe(table, z), slot++);
    reps.mode = "exact";
  } else {
    for (const char* name : {"hajek", "horvitz_thompson", "ikn", "fe"})
      reps.estimates[name].resize(opt.n_replicates);
    const int threads = opt.threads > 0 ? opt.threads : thread_count();
    parallel_for(opt.n_replicates, threads, [&](long r) {
      const std::vector<int> z =
          assign_within_strata(table, n_treated, opt.seed, std::uint64_t(r) + 1);
      eval_into(observe(table, z), r);
    });
    reps.mode = "mc";
  }
  return compute_metrics(reps);
}

// Variance-estimator and interval study: per replicate the Hajek fit, the
// design-based variance under each feasible policy, the HC2 benchmark, and
// score / Wald intervals.
inline sim_summary run_variance_study(const potential_table& table,
                                      const std::vector<int>& n_treated,
                                      const run_options& opt) {
  bool large_feasible = true;
  for (std::size_t b = 0; b < n_treated.size(); ++b) {
    const int n = table.stratum_sizes()[b];
    if (n_treated[b] < 2 || n - n_treated[b] < 2) large_feasible = false;
  }
  replicate_set reps;
  reps.truth = sate(table).tau;

  const int df = int(table.size()) - 2;
  auto eval_into = [&](const experiment_data& data, long slot) {
    const hajek_fit fit = hajek_estimate(data);
    reps.estimates["hajek"][slot] = fit.tau;
    const variance_report auto_rep =
        variance_estimate(data, fit.rho1, fit.rho0);
    reps.variances["v_auto"][slot] = auto_rep.v_hat;
    reps.variances["v_small"][slot] =
        variance_estimate(data, fit.rho1, fit.rho0,
                          variance_policy::force_small)
            .v_hat;
    if (large_feasible)
      reps.variances["v_large"][slot] =
          variance_estimate(data, fit.rho1, fit.rho0,
                            variance_policy::force_large)
              .v_hat;
    const double hc2 = hc2_variance(data);
    reps.variances["hc2"][slot] = hc2;

    reps.intervals["score"][slot] = score_ci(data, opt.alpha);
    reps.intervals["wald_z"][slot] = wald_ci(data, opt.alpha, df_choice::z());
    reps.intervals["wald_t"][slot] =
        wald_ci(data, opt.alpha, df_choice::t(df));
    const double q = student_t_quantile(1.0 - opt.alpha / 2.0, df);
    const double hse = std::sqrt(std::max(hc2, 0.0));
    interval hc2_iv;
    hc2_iv.lo = fit.tau - q * hse;
    hc2_iv.hi = fit.tau + q * hse;
    hc2_iv.level = 1.0 - opt.alpha;
    hc2_iv.method = "hc2_t";
    reps.intervals["hc2_t"][slot] = hc2_iv;
  };

  auto reserve = [&](long total) {
    reps.estimates["hajek"].resize(total);
    reps.variances["v_auto"].resize(total);
    reps.variances["v_small"].resize(total);
    if (large_feasible) reps.variances["v_large"].resize(total);
    reps.variances["hc2"].resize(total);
    for (const char* name : {"score", "wald_z", "wald_t", "hc2_t"})
      reps.intervals[name].resize(total);
  };

  if (opt.mode == run_options::mode_t::exact) {
    assignment_enumerator e(table, n_treated, opt.enumeration_cap);
    reserve(long(e.total()));
    std::vector<int> z;
    long slot = 0;
    while (e.next(z)) eval_into(observe(table, z), slot++);
    reps.mode = "exact";
  } else {
    reserve(opt.n_replicates);
    const int threads = opt.threads > 0 ? opt.threads : thread_count();
    parallel_for(opt.n_replicates, threads, [&](long r) {
      const std::vector<int> z =
          assign_within_strata(table, n_treated, opt.seed, std::uint64_t(r) + 1);
      eval_into(observe(table, z), r);
    });
    reps.mode = "mc";
  }
  return compute_metrics(reps);
}

// Stream per-assignment estimates; used by the enumeration CLI. Returns the
// summary over the full enumeration.
template <typename RowFn>
sim_summary enumerate_estimates(const potential_table& table,
                                const std::vector<int>& n_treated, double cap,
                                RowFn&& row) {
  assignment_enumerator e(table, n_treated, cap);
  const long total = long(e.total());
  replicate_set reps;
  reps.truth = sate(table).tau;
  reps.mode = "exact";
  for (const char* name : {"hajek", "horvitz_thompson", "ikn", "fe"})
    reps.estimates[name].resize(total);
  std::vector<int> z;
  long slot = 0;
  while (e.next(z)) {
    const experiment_data data = observe(table, z);
    const double h = hajek_estimate(data).tau;
    const double ht = horvitz_thompson(data);
    const double ik = ikn(data);
    const double f = fixed_effects(data);
    reps.estimates["hajek"][slot] = h;
    reps.estimates["horvitz_thompson"][slot] = ht;
    reps.estimates["ikn"][slot] = ik;
    reps.estimates["fe"][slot] = f;
    row(slot, z, h, ht, ik, f);
    ++slot;
  }
  return compute_metrics(reps);
}

}  // namespace hajek::sim
