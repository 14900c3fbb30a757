#include <catch2/catch_amalgamated.hpp>

#include <functional>
#include <random>

#include "hajek/io.hpp"
#include "hajek/variance.hpp"
#include "oracle_helpers.hpp"

using namespace hajek;

namespace {

// Enumerate all ways to observe a_i on n_a units and b_j on the rest; feed
// the observed value spans to `fn`.
void for_each_split(const std::vector<double>& a, const std::vector<double>& b,
                    int n_a,
                    const std::function<void(const std::vector<double>&,
                                             const std::vector<double>&)>& fn) {
  const int n = int(a.size());
  std::vector<int> mask(std::size_t(n), 0);
  std::fill(mask.begin(), mask.begin() + n_a, 1);
  std::sort(mask.begin(), mask.end(), std::greater<>());
  do {
    std::vector<double> ga, gb;
    for (int i = 0; i < n; ++i)
      (mask[std::size_t(i)] ? ga : gb).push_back(
          mask[std::size_t(i)] ? a[std::size_t(i)] : b[std::size_t(i)]);
    fn(ga, gb);
  } while (std::prev_permutation(mask.begin(), mask.end()));
}

struct split_moments {
  double mean_stat = 0.0;     // mean of the supplied statistic
  double var_stat = 0.0;      // population variance of the statistic
  double var_meandiff = 0.0;  // Var(mean(a_obs) - mean(b_obs))
};

split_moments enumerate_split(
    const std::vector<double>& a, const std::vector<double>& b, int n_a,
    const std::function<double(std::span<const double>,
                               std::span<const double>)>& stat) {
  std::vector<double> stats, diffs;
  for_each_split(a, b, n_a,
                 [&](const std::vector<double>& ga,
                     const std::vector<double>& gb) {
                   stats.push_back(stat(ga, gb));
                   double ma = 0.0, mb = 0.0;
                   for (double v : ga) ma += v;
                   for (double v : gb) mb += v;
                   diffs.push_back(ma / double(ga.size()) -
                                   mb / double(gb.size()));
                 });
  auto mean = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    return m / double(v.size());
  };
  auto var = [&](const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / double(v.size());
  };
  return {mean(stats), var(stats), var(diffs)};
}

// Population covariance pieces of two fixed vectors (divisor n).
struct pop_sigma {
  double sa, sb, sab, abar, bbar;
};

pop_sigma pop_moments(const std::vector<double>& a,
                      const std::vector<double>& b) {
  const double n = double(a.size());
  pop_sigma m{0, 0, 0, 0, 0};
  for (double v : a) m.abar += v;
  for (double v : b) m.bbar += v;
  m.abar /= n;
  m.bbar /= n;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m.sa += (a[i] - m.abar) * (a[i] - m.abar);
    m.sb += (b[i] - m.bbar) * (b[i] - m.bbar);
    m.sab += (a[i] - m.abar) * (b[i] - m.bbar);
  }
  m.sa /= n;
  m.sb /= n;
  m.sab /= n;
  return m;
}

std::vector<double> random_vec(std::mt19937_64& gen, int n, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(std::size_t(n), 0.0);
  for (double& x : v) x = d(gen);
  return v;
}

}  // namespace

TEST_CASE("gamma pseudo-outcomes") {
  const experiment_data d = experiment_data::build({
      {"s", "t", 1.0, 1, 3.0},
      {"s", "c", 2.0, 0, 1.0},
  });
  SECTION("worked value: n_b * w * (y - r)") {
    const auto g = gamma_pseudo(d, 1.0, 1.0);
    CHECK(g[0] == Catch::Approx(4.0).epsilon(1e-15));  // 2 * 1 * (3 - 1)
    CHECK(g[1] == Catch::Approx(0.0).margin(1e-15));
  }
  SECTION("centering at the observed outcome zeroes the unit") {
    const auto g = gamma_pseudo(d, 3.0, 1.0);
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
  }
  SECTION("arm mean equals the inverse-probability-weighted form") {
    std::mt19937_64 gen(3);
    const experiment_data big =
        oracle::random_observed(gen, {3, 4, 5}, {1, 2, 2});
    const auto g = gamma_pseudo(big, 0.2, -0.1);
    for (std::size_t b = 0; b < big.strata().size(); ++b) {
      for (int z : {0, 1}) {
        double gsum = 0.0, ipw = 0.0;
        int arm_n = 0;
        for (std::size_t i = 0; i < big.size(); ++i) {
          if (std::size_t(big.stratum_of(i)) != b) continue;
          const cluster_obs& u = big.units()[i];
          if (u.z != z) continue;
          gsum += g[i];
          arm_n += 1;
          ipw += u.weight * (u.y - (z ? 0.2 : -0.1)) / big.layout_of(i).pi(z);
        }
        CHECK(gsum / arm_n == Catch::Approx(ipw).epsilon(1e-12).margin(1e-12));
      }
    }
  }
}

TEST_CASE("within-arm estimator: unbiasedness bias formula") {
  // Sampling-theory identity: over all splits, the within-arm pooled
  // estimator exceeds the true variance of the observed mean difference by
  // (sigma_a^2 + sigma_b^2 - 2 sigma_ab) / (n - 1).
  std::mt19937_64 gen(17);
  for (auto [n, na] : {std::pair{4, 2}, {5, 2}, {6, 3}, {7, 4}}) {
    const auto a = random_vec(gen, n), b = random_vec(gen, n);
    const auto m = enumerate_split(
        a, b, na, [](std::span<const double> g1, std::span<const double> g0) {
          return nu_large(g1, g0);
        });
    const pop_sigma p = pop_moments(a, b);

    SECTION("closed-form variance of the mean difference, n=" +
            std::to_string(n)) {
      const int nb = n - na;
      const double expected = (double(n - na) / (n - 1)) * p.sa / na +
                              (double(n - nb) / (n - 1)) * p.sb / nb +
                              2.0 * p.sab / (n - 1);
      CHECK(m.var_meandiff == Catch::Approx(expected).margin(1e-12));
    }
    SECTION("bias identity, n=" + std::to_string(n)) {
      const double bias = (p.sa + p.sb - 2.0 * p.sab) / (n - 1);
      CHECK(m.mean_stat - m.var_meandiff == Catch::Approx(bias).margin(1e-12));
    }
  }
}

TEST_CASE("cross-arm estimator: bias and nonnegativity") {
  std::mt19937_64 gen(19);
  SECTION("bias equals the squared mean gap") {
    for (auto [n, na] : {std::pair{2, 1}, {3, 1}, {4, 2}, {6, 2}}) {
      const auto a = random_vec(gen, n), b = random_vec(gen, n);
      const auto m = enumerate_split(
          a, b, na,
          [](std::span<const double> g1, std::span<const double> g0) {
            return nu_small(g1, g0);
          });
      const pop_sigma p = pop_moments(a, b);
      const double gap = p.abar - p.bbar;
      CHECK(m.mean_stat - m.var_meandiff ==
            Catch::Approx(gap * gap).margin(1e-12));
    }
  }
  SECTION("nonnegative whenever an arm is a singleton") {
    for (int n : {2, 3, 5, 8}) {
      const auto a = random_vec(gen, n, 2.0), b = random_vec(gen, n, 0.5);
      for_each_split(a, b, 1,
                     [&](const std::vector<double>& ga,
                         const std::vector<double>& gb) {
                       CHECK(nu_small(ga, gb) >= -1e-12);
                     });
      for_each_split(a, b, n - 1,
                     [&](const std::vector<double>& ga,
                         const std::vector<double>& gb) {
                       CHECK(nu_small(ga, gb) >= -1e-12);
                     });
    }
  }
  SECTION("pair form is the squared difference") {
    const std::vector<double> g1 = {3.0}, g0 = {1.0};
    CHECK(nu_small(g1, g0) == Catch::Approx(4.0).epsilon(1e-15));
  }
  SECTION("identical values across arms give zero") {
    const std::vector<double> g = {1.0, 2.0, 3.0};
    CHECK(nu_small(g, g) == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("pooled-variance form matches the double sum") {
  std::mt19937_64 gen(23);
  for (auto [n, na] : {std::pair{2, 1}, {4, 1}, {5, 3}, {8, 4}}) {
    const auto a = random_vec(gen, n), b = random_vec(gen, n);
    for_each_split(a, b, na,
                   [&](const std::vector<double>& ga,
                       const std::vector<double>& gb) {
                     const double lhs = nu_small(ga, gb);
                     const double rhs = nu_small_pooled(ga, gb);
                     CHECK(lhs == Catch::Approx(rhs).epsilon(1e-10).margin(
                                      1e-10));
                   });
  }
}

TEST_CASE("variance ratio of the two forms under equal pseudo-outcomes") {
  // With a constant effect the two gamma vectors coincide; on balanced
  // strata the cross-arm statistic then has exactly (n-2)^2 times the
  // spread of the within-arm one.
  std::mt19937_64 gen(29);
  for (int n : {4, 6, 8}) {
    const auto x = random_vec(gen, n);
    const auto ml = enumerate_split(
        x, x, n / 2,
        [](std::span<const double> g1, std::span<const double> g0) {
          return nu_large(g1, g0);
        });
    const auto ms = enumerate_split(
        x, x, n / 2,
        [](std::span<const double> g1, std::span<const double> g0) {
          return nu_small(g1, g0);
        });
    CHECK(ms.mean_stat == Catch::Approx(ml.mean_stat).epsilon(1e-10));
    CHECK(ms.var_stat == Catch::Approx(double((n - 2) * (n - 2)) *
                                       ml.var_stat)
                             .epsilon(1e-10));
  }
}

TEST_CASE("bias oracle matches enumeration on whole strata") {
  std::mt19937_64 gen(31);
  for (auto [n, na] : {std::pair{2, 1}, {4, 2}, {5, 2}, {6, 3}}) {
    oracle::table_spec spec;
    spec.sizes = {n};
    const potential_table t = oracle::random_table(gen, spec);
    const double r1 = 0.3, r0 = -0.2;
    std::vector<double> a(std::size_t(n), 0.0), b(std::size_t(n), 0.0);
    for (int i = 0; i < n; ++i) {
      a[std::size_t(i)] =
          n * t.rows()[std::size_t(i)].weight * (t.rows()[std::size_t(i)].y1 - r1);
      b[std::size_t(i)] =
          n * t.rows()[std::size_t(i)].weight * (t.rows()[std::size_t(i)].y0 - r0);
    }
    const auto ms = enumerate_split(
        a, b, na, [](std::span<const double> g1, std::span<const double> g0) {
          return nu_small(g1, g0);
        });
    CHECK(nu_bias_oracle(t.rows(), r1, r0, nu_kind::small_form) ==
          Catch::Approx(ms.mean_stat - ms.var_meandiff).margin(1e-12));
    if (na >= 2 && n - na >= 2) {
      const auto ml = enumerate_split(
          a, b, na,
          [](std::span<const double> g1, std::span<const double> g0) {
            return nu_large(g1, g0);
          });
      CHECK(nu_bias_oracle(t.rows(), r1, r0, nu_kind::large_form) ==
            Catch::Approx(ml.mean_stat - ml.var_meandiff).margin(1e-12));
    }
  }
  SECTION("worked pair values") {
    // equal weights, unit effects 0 and 2, centered at an effect of 1:
    // the two pseudo-outcome vectors have equal means, so no bias
    const potential_table t = potential_table::build({
        {"p", "u1", 1.0, 0.0, 0.0},
        {"p", "u2", 1.0, 0.0, 2.0},
    });
    CHECK(nu_bias_oracle(t.rows(), 1.0, 0.0, nu_kind::small_form) ==
          Catch::Approx(0.0).margin(1e-15));
    const potential_table t2 = potential_table::build({
        {"p", "u1", 1.0, 0.0, 0.0},
        {"p", "u2", 1.0, 0.0, 4.0},
    });
    // means now differ by gammabar1 - gammabar0 = 2*(2-1) = 2; bias 4
    CHECK(nu_bias_oracle(t2.rows(), 1.0, 0.0, nu_kind::small_form) ==
          Catch::Approx(4.0).epsilon(1e-13));
  }
}

TEST_CASE("variance aggregation and policies") {
  const experiment_data& d = io::load_dataset("osnap");
  const hajek_fit fit = hajek_estimate(d);

  SECTION("aggregate is the scaled stratum sum") {
    const variance_report rep = variance_estimate(d, fit.rho1, fit.rho0);
    double acc = 0.0;
    for (const stratum_nu& s : rep.per_stratum) {
      CHECK(s.used_small);  // pairs force the cross-arm form
      acc += s.value;
    }
    const double w = d.total_weight();
    CHECK(rep.v_hat == Catch::Approx(acc / (w * w)).epsilon(1e-15));
    CHECK(rep.se == Catch::Approx(std::sqrt(rep.v_hat)).epsilon(1e-15));
    CHECK_FALSE(rep.clamped);
  }
  SECTION("pairs cannot use the within-arm form") {
    CHECK_THROWS_AS(
        variance_estimate(d, fit.rho1, fit.rho0, variance_policy::force_large),
        error);
  }
  SECTION("policies agree when every stratum is large") {
    std::mt19937_64 gen(37);
    const experiment_data big =
        oracle::random_observed(gen, {4, 5, 6}, {2, 2, 3});
    const variance_report a = variance_estimate(big);
    const variance_report l =
        variance_estimate(big, variance_policy::force_large);
    CHECK(a.v_hat == Catch::Approx(l.v_hat).epsilon(1e-15));
    for (const stratum_nu& s : a.per_stratum) CHECK_FALSE(s.used_small);
  }
  SECTION("mixed designs split by arm size") {
    std::mt19937_64 gen(41);
    const experiment_data mixed =
        oracle::random_observed(gen, {4, 4}, {1, 2});
    const variance_report rep = variance_estimate(mixed);
    REQUIRE(rep.per_stratum.size() == 2);
    CHECK(rep.per_stratum[0].used_small);       // singleton treated arm
    CHECK_FALSE(rep.per_stratum[1].used_small);  // two per arm
  }
}

TEST_CASE("population sigma matches enumeration on uniform-weight pairs") {
  // with equal weights inside each pair the ratio denominator is fixed, so
  // the sigma-based variance is exact, not just asymptotic
  std::mt19937_64 gen(43);
  std::vector<potential_row> rows;
  std::normal_distribution<double> yd(0.0, 1.0);
  std::uniform_real_distribution<double> wd(0.5, 3.0);
  for (int b = 0; b < 4; ++b) {
    const double w = wd(gen);
    for (int i = 0; i < 2; ++i)
      rows.push_back({"s" + std::to_string(b),
                      "c" + std::to_string(2 * b + i), w, yd(gen), yd(gen)});
  }
  const potential_table t = potential_table::build(rows);
  std::vector<stratum_layout> design;
  for (std::size_t b = 0; b < t.stratum_count(); ++b)
    design.push_back({t.stratum_ids()[b], 2, 1});

  const sigma_oracle s = population_sigma(t, design);
  const double exact = oracle::enumeration_variance(
      t, {1, 1, 1, 1},
      [](const experiment_data& d) { return hajek_estimate(d).tau; });
  CHECK(s.tau_variance == Catch::Approx(exact).epsilon(1e-10).margin(1e-12));
  CHECK(s.sigma1_sq >= 0.0);
  CHECK(s.sigma0_sq >= 0.0);
}

TEST_CASE("hc2 sandwich variance") {
  SECTION("two-sample form on a balanced equal-weight design") {
    // HC2 with an intercept-plus-indicator design and equal weights reduces
    // to s1^2/n1 + s0^2/n0 with (n_z - 1) divisors.
    const experiment_data d = experiment_data::build({
        {"a", "a1", 1.0, 1, 1.0},
        {"a", "a2", 1.0, 0, 0.0},
        {"b", "b1", 1.0, 1, 3.0},
        {"b", "b2", 1.0, 0, 1.0},
        {"c", "c1", 1.0, 1, 2.0},
        {"c", "c2", 1.0, 0, -1.0},
    });
    double m1 = (1.0 + 3.0 + 2.0) / 3.0, m0 = 0.0;
    double s1 = 0.0, s0 = 0.0;
    for (double y : {1.0, 3.0, 2.0}) s1 += (y - m1) * (y - m1);
    for (double y : {0.0, 1.0, -1.0}) s0 += (y - m0) * (y - m0);
    s1 /= 2.0;
    s0 /= 2.0;
    CHECK(hc2_variance(d) == Catch::Approx(s1 / 3.0 + s0 / 3.0).epsilon(1e-12));
  }
  SECTION("full-leverage points are rejected") {
    linalg::matrix x(3, 2);
    std::vector<double> y = {1.0, 0.0, 0.5}, om = {1.0, 1.0, 1.0};
    for (int i = 0; i < 3; ++i) x(std::size_t(i), 0) = 1.0;
    x(0, 1) = 1.0;  // single treated row carries all of z's identification
    CHECK_THROWS_MATCHES(hc2_coef_variance(x, y, om, 1), error,
                         Catch::Matchers::Predicate<error>([](const error& e) {
                           return e.code() == errc::leverage_one;
                         }));
  }
}
