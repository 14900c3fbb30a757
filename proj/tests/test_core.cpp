#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hajek/core.hpp"
#include "hajek/io.hpp"
#include "oracle_helpers.hpp"

using namespace hajek;

namespace {

std::vector<cluster_obs> osnap_units() {
  const experiment_data d = io::load_dataset("osnap");
  return std::vector<cluster_obs>(d.units().begin(), d.units().end());
}

}  // namespace

TEST_CASE("experiment data preserves order and layouts") {
  const experiment_data d = experiment_data::build(osnap_units());
  REQUIRE(d.size() == 20);
  REQUIRE(d.strata().size() == 10);
  REQUIRE(d.total_weight() == 1448.0);
  // strata keep first-appearance order
  CHECK(d.strata().front().stratum_id == "p01");
  CHECK(d.strata().back().stratum_id == "p10");
  for (const stratum_layout& s : d.strata()) {
    CHECK(s.n == 2);
    CHECK(s.n_treated == 1);
    CHECK(s.n_control() == 1);
    CHECK(s.pi(1) == 0.5);
    CHECK(s.pi(0) == 0.5);
  }
  // inverse assignment probability of every unit is n_b / n_bz = 2
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.inv_pi(i) == 2.0);
}

TEST_CASE("experiment data validation") {
  SECTION("empty input") {
    CHECK_THROWS_MATCHES(experiment_data::build({}), error,
                         Catch::Matchers::Predicate<error>([](const error& e) {
                           return e.code() == errc::empty_input;
                         }));
  }
  SECTION("duplicate cluster id") {
    auto u = osnap_units();
    u[1].cluster_id = u[0].cluster_id;
    CHECK_THROWS_MATCHES(experiment_data::build(u), error,
                         Catch::Matchers::Predicate<error>([](const error& e) {
                           return e.code() == errc::duplicate_unit;
                         }));
  }
  SECTION("non-finite outcome") {
    auto u = osnap_units();
    u[3].y = std::nan("");
    CHECK_THROWS_MATCHES(experiment_data::build(u), error,
                         Catch::Matchers::Predicate<error>([](const error& e) {
                           return e.code() == errc::nonfinite_value;
                         }));
  }
  SECTION("negative weight") {
    auto u = osnap_units();
    u[0].weight = -1.0;
    CHECK_THROWS_AS(experiment_data::build(u), error);
  }
  SECTION("zero total weight") {
    auto u = osnap_units();
    for (auto& x : u) x.weight = 0.0;
    CHECK_THROWS_MATCHES(experiment_data::build(u), error,
                         Catch::Matchers::Predicate<error>([](const error& e) {
                           return e.code() == errc::zero_total_weight;
                         }));
  }
  SECTION("one-arm stratum") {
    auto u = osnap_units();
    u[1].z = 1;  // both members of p01 treated
    CHECK_THROWS_MATCHES(experiment_data::build(u), error,
                         Catch::Matchers::Predicate<error>([](const error& e) {
                           return e.code() == errc::degenerate_stratum;
                         }));
  }
  SECTION("validation errors carry the validation kind") {
    try {
      experiment_data::build({});
      FAIL("expected a throw");
    } catch (const error& e) {
      CHECK(e.kind() == err_kind::validation);
    }
  }
}

TEST_CASE("potential table and SATE") {
  std::vector<potential_row> rows = {
      {"a", "a1", 2.0, 0.0, 1.0},
      {"a", "a2", 1.0, 1.0, 1.0},
      {"b", "b1", 1.0, -1.0, 2.0},
      {"b", "b2", 2.0, 0.0, 0.0},
  };
  const potential_table t = potential_table::build(rows);
  REQUIRE(t.stratum_count() == 2);
  REQUIRE(t.total_weight() == 6.0);
  const sate_components s = sate(t);
  // rho1 = (2*1 + 1*1 + 1*2 + 2*0)/6, rho0 = (0 + 1 - 1 + 0)/6
  CHECK(s.rho1 == Catch::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(s.rho0 == Catch::Approx(0.0).margin(1e-15));
  CHECK(s.tau == Catch::Approx(5.0 / 6.0).epsilon(1e-15));

  SECTION("tau is the weighted mean of unit effects") {
    double num = 0.0;
    for (const potential_row& r : t.rows()) num += r.weight * (r.y1 - r.y0);
    CHECK(s.tau == Catch::Approx(num / t.total_weight()).epsilon(1e-15));
  }

  SECTION("singleton strata are rejected") {
    rows.push_back({"c", "c1", 1.0, 0.0, 0.0});
    CHECK_THROWS_MATCHES(potential_table::build(rows), error,
                         Catch::Matchers::Predicate<error>([](const error& e) {
                           return e.code() == errc::degenerate_stratum;
                         }));
  }
}

TEST_CASE("observe maps assignments onto potential outcomes") {
  std::mt19937_64 gen(7);
  const potential_table t = oracle::random_paired_table(gen, 4);

  SECTION("positional form") {
    std::vector<int> z = {1, 0, 0, 1, 1, 0, 0, 1};
    const experiment_data d = observe(t, z);
    for (std::size_t i = 0; i < t.size(); ++i) {
      CHECK(d.units()[i].y == (z[i] ? t.rows()[i].y1 : t.rows()[i].y0));
      CHECK(d.units()[i].weight == t.rows()[i].weight);
      CHECK(d.units()[i].cluster_id == t.rows()[i].cluster_id);
    }
  }
  SECTION("map form matches positional form") {
    std::vector<int> z = {0, 1, 1, 0, 0, 1, 1, 0};
    assignment by_id;
    for (std::size_t i = 0; i < t.size(); ++i)
      by_id[t.rows()[i].cluster_id] = z[i];
    const experiment_data a = observe(t, z);
    const experiment_data b = observe(t, by_id);
    for (std::size_t i = 0; i < t.size(); ++i)
      CHECK(a.units()[i].y == b.units()[i].y);
  }
  SECTION("wrong length and unknown ids fail") {
    std::vector<int> z = {1, 0};
    CHECK_THROWS_AS(observe(t, z), error);
    assignment by_id;
    by_id["nope"] = 1;
    CHECK_THROWS_AS(observe(t, by_id), error);
  }
  SECTION("an arm-empty assignment fails validation") {
    std::vector<int> z = {1, 1, 0, 1, 1, 0, 0, 1};
    CHECK_THROWS_MATCHES(observe(t, z), error,
                         Catch::Matchers::Predicate<error>([](const error& e) {
                           return e.code() == errc::degenerate_stratum;
                         }));
  }
}

TEST_CASE("kish effective sample size") {
  std::vector<cluster_obs> u = {
      {"a", "a1", 1.0, 1, 0.0},
      {"a", "a2", 1.0, 0, 0.0},
      {"b", "b1", 1.0, 1, 0.0},
      {"b", "b2", 1.0, 0, 0.0},
  };
  CHECK(kish_ess(experiment_data::build(u)) == Catch::Approx(4.0));
  u[0].weight = 3.0;  // (6)^2 / (9+1+1+1) = 3
  CHECK(kish_ess(experiment_data::build(u)) == Catch::Approx(3.0));
}
