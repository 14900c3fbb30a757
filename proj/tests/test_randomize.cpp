#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "hajek/randomize.hpp"
#include "oracle_helpers.hpp"

using namespace hajek;

namespace {

potential_table sized_table(const std::vector<int>& sizes) {
  std::mt19937_64 gen(101);
  oracle::table_spec spec;
  spec.sizes = sizes;
  return oracle::random_table(gen, spec);
}

std::vector<std::vector<int>> collect(const potential_table& t,
                                      const std::vector<int>& ks,
                                      double cap = 1e7) {
  assignment_enumerator e(t, ks, cap);
  std::vector<std::vector<int>> all;
  std::vector<int> z;
  while (e.next(z)) all.push_back(z);
  return all;
}

}  // namespace

TEST_CASE("assignment counting") {
  SECTION("product of binomials") {
    CHECK(count_assignments(sized_table({2, 2, 2}), {1, 1, 1}) == 8.0);
    CHECK(count_assignments(sized_table({4, 2}), {2, 1}) == 12.0);
    CHECK(count_assignments(sized_table({5, 3, 4}), {2, 1, 2}) ==
          Catch::Approx(10.0 * 3.0 * 6.0));
  }
  SECTION("counts keep growing past any usable cap") {
    std::vector<int> sizes(60, 4), ks(60, 2);
    CHECK(count_assignments(sized_table(sizes), ks) > 1e18);
  }
  SECTION("invalid treated counts") {
    const potential_table t = sized_table({3, 3});
    CHECK_THROWS_MATCHES(count_assignments(t, {1}), error,
                         Catch::Matchers::Predicate<error>([](const error& e) {
                           return e.code() == errc::weight_mismatch;
                         }));
    CHECK_THROWS_MATCHES(count_assignments(t, {0, 1}), error,
                         Catch::Matchers::Predicate<error>([](const error& e) {
                           return e.code() == errc::degenerate_stratum;
                         }));
    CHECK_THROWS_MATCHES(count_assignments(t, {1, 3}), error,
                         Catch::Matchers::Predicate<error>([](const error& e) {
                           return e.code() == errc::degenerate_stratum;
                         }));
  }
}

TEST_CASE("exhaustive enumeration") {
  SECTION("three pairs yield the eight assignments, each exactly once") {
    const potential_table t = sized_table({2, 2, 2});
    const auto all = collect(t, {1, 1, 1});
    REQUIRE(all.size() == 8);
    CHECK(std::set<std::vector<int>>(all.begin(), all.end()).size() == 8);
    for (const auto& z : all) {
      CHECK(z[0] + z[1] == 1);
      CHECK(z[2] + z[3] == 1);
      CHECK(z[4] + z[5] == 1);
    }
  }
  SECTION("sequence matches the independent reference enumeration") {
    const potential_table t = sized_table({3, 4, 2});
    const std::vector<int> ks = {1, 2, 1};
    const auto all = collect(t, ks);
    assignment_enumerator e(t, ks);
    CHECK(double(all.size()) == e.total());

    std::vector<std::vector<int>> ref;
    oracle::for_each_assignment(
        t, ks, [&](const std::vector<int>& z) { ref.push_back(z); });
    REQUIRE(ref.size() == all.size());
    CHECK(ref == all);
  }
  SECTION("two passes produce identical sequences") {
    const potential_table t = sized_table({4, 3});
    CHECK(collect(t, {2, 1}) == collect(t, {2, 1}));
  }
  SECTION("the cap rejects oversized enumerations up front") {
    const potential_table t = sized_table({3, 4, 2});
    CHECK_THROWS_MATCHES(
        assignment_enumerator(t, {1, 2, 1}, 35.0), error,
        Catch::Matchers::Predicate<error>([](const error& e) {
          return e.code() == errc::too_many_assignments &&
                 std::string(e.what()).find("36") != std::string::npos;
        }));
  }
}

TEST_CASE("random within-stratum assignment") {
  const potential_table t = sized_table({4, 3, 5});
  const std::vector<int> ks = {2, 1, 3};

  SECTION("arm sizes always match the design") {
    for (std::uint64_t rep = 0; rep < 200; ++rep) {
      const auto z = assign_within_strata(t, ks, 99, rep);
      std::vector<int> counts(t.stratum_count(), 0);
      for (std::size_t i = 0; i < z.size(); ++i)
        counts[t.stratum_of(i)] += z[i];
      CHECK(counts == ks);
    }
  }
  SECTION("same seed and replicate reproduce the draw") {
    CHECK(assign_within_strata(t, ks, 7, 3) ==
          assign_within_strata(t, ks, 7, 3));
  }
  SECTION("replicates differ from each other") {
    const auto base = assign_within_strata(t, ks, 7, 0);
    int differing = 0;
    for (std::uint64_t rep = 1; rep <= 10; ++rep)
      differing += assign_within_strata(t, ks, 7, rep) != base;
    CHECK(differing >= 8);
  }
  SECTION("id-keyed flavor tags the right clusters") {
    const auto z = assign_within_strata(t, ks, 123, 5);
    const assignment a = assignment_from_rows(t, z);
    REQUIRE(a.size() == t.size());
    for (std::size_t i = 0; i < t.size(); ++i)
      CHECK(a.at(t.rows()[i].cluster_id) == z[i]);
  }
  SECTION("draws are close to uniform over the possible assignments") {
    const potential_table one = sized_table({4});
    std::map<std::vector<int>, int> counts;
    const int n_draws = 6000;
    for (std::uint64_t rep = 0; rep < n_draws; ++rep)
      counts[assign_within_strata(one, {2}, 2024, rep)] += 1;
    REQUIRE(counts.size() == 6);
    // each of the 6 assignments: mean 1000, sd ~28.9, so +-145 is 5 sigma
    for (const auto& [z, c] : counts) {
      CHECK(c > 855);
      CHECK(c < 1145);
    }
  }
}
