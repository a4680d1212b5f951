#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include <boost/math/special_functions/erf.hpp>

namespace adascreen {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based stream seed: the stream for (master, tag, index) never depends
/// on how many other streams were drawn before it.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag,
                                    std::uint64_t index = 0) noexcept {
  return mix64(mix64(master ^ mix64(tag)) + index);
}

namespace stream_tag {
inline constexpr std::uint64_t copula_fit = 0x11;
inline constexpr std::uint64_t risk_fit = 0x22;
inline constexpr std::uint64_t population = 0x33;
inline constexpr std::uint64_t reservoir = 0x44;
inline constexpr std::uint64_t simulation = 0x55;
}  // namespace stream_tag

inline double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_quantile(double p) {
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

inline double uniform01(Rng& rng) {
  // (0,1): 53 random bits, offset by half an ulp so 0 is never returned
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

inline double std_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

/// Standard normal restricted to [lo, hi]. Rejection samplers after Robert (1995):
/// normal or uniform proposals around the mode, exponential proposals in the tails.
inline double truncated_std_normal(double lo, double hi, Rng& rng) {
  if (!(lo < hi)) return lo;
  if (hi <= 0.0) return -truncated_std_normal(-hi, -lo, rng);
  if (lo <= 0.0) {
    if (hi - lo > 2.5) {
      for (;;) {
        const double x = std_normal(rng);
        if (x >= lo && x <= hi) return x;
      }
    }
    for (;;) {
      const double x = lo + (hi - lo) * uniform01(rng);
      if (uniform01(rng) <= std::exp(-0.5 * x * x)) return x;
    }
  }
  // lo > 0
  const double alpha = 0.5 * (lo + std::sqrt(lo * lo + 4.0));
  const double uniform_width =
      2.0 * std::sqrt(std::exp(1.0)) / (lo + std::sqrt(lo * lo + 4.0)) *
      std::exp(0.25 * (lo * lo - lo * std::sqrt(lo * lo + 4.0)));
  if (hi - lo < uniform_width) {
    for (;;) {
      const double x = lo + (hi - lo) * uniform01(rng);
      if (uniform01(rng) <= std::exp(0.5 * (lo * lo - x * x))) return x;
    }
  }
  for (;;) {
    const double x = lo - std::log(uniform01(rng)) / alpha;
    if (x > hi) continue;
    const double d = x - alpha;
    if (uniform01(rng) <= std::exp(-0.5 * d * d)) return x;
  }
}

/// N(mean, 1) restricted to [lo, hi].
inline double truncated_normal(double mean, double lo, double hi, Rng& rng) {
  return mean + truncated_std_normal(lo - mean, hi - mean, rng);
}

}  // namespace adascreen
