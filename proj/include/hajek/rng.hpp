#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "hajek/error.hpp"

namespace hajek {

namespace detail {

// splitmix64 finalizer; used for seeding and for deriving substream keys.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

// xoshiro256++ with splitmix64 seeding. The generator and the sampling
// recipes below are pinned: streams are reproducible across platforms and
// versions, and (seed, replicate, stratum) keys give independent substreams
// so results cannot depend on scheduling or thread count.
class rng {
 public:
  explicit rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) {
      sm = detail::mix64(sm);
      word = sm;
    }
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
  }

  static rng substream(std::uint64_t seed, std::uint64_t key1,
                       std::uint64_t key2 = 0) {
    std::uint64_t h = detail::mix64(seed);
    h = detail::mix64(h ^ detail::mix64(key1 + 0x243F6A8885A308D3ULL));
    h = detail::mix64(h ^ detail::mix64(key2 + 0x13198A2E03707344ULL));
    return rng(h);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = detail::rotl(s_[3], 45);
    return result;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in (0, 1]; safe under log().
  double uniform_pos() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) fail_numeric(errc::domain_error, "below(0)");
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t x = next_u64();
      if (x >= threshold) return x % n;
    }
  }

  // Standard normal via Box-Muller; the sine partner is discarded so each
  // draw consumes exactly two uniforms regardless of call history.
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925287 * u2);
  }
  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Gamma(shape, rate) via the Marsaglia-Tsang squeeze; shapes below one
  // are boosted through Gamma(shape + 1).
  double gamma(double shape, double rate) {
    if (!(shape > 0.0) || !(rate > 0.0))
      fail_numeric(errc::domain_error, "gamma needs positive shape and rate");
    if (shape < 1.0) {
      const double u = uniform_pos();
      return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v / rate;
    }
  }

 private:
  std::array<std::uint64_t, 4> s_;
};

}  // namespace hajek
