#pragma once

#include <cmath>
#include <cstdint>

namespace agsd {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

// Phi(x) via erfc keeps full relative precision in the lower tail.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

// 1 - Phi(x) without cancellation.
inline double normal_sf(double x) { return 0.5 * std::erfc(x * kInvSqrt2); }

// Inverse of Phi on (0, 1).
double normal_quantile(double p);

inline double expit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// SplitMix64 finalizer, used to derive independent stream seeds from
// (master seed, index) pairs so replicates can run in any order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index,
                                 std::uint64_t salt = 0) {
  return splitmix64(splitmix64(splitmix64(master) ^ index) ^ salt);
}

}  // namespace agsd
