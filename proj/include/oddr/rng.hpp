#pragma once

// Portable draws on top of std::mt19937_64. The engine itself is fully
// specified by the standard; the <random> distributions are not, so the
// helpers below keep seeded streams identical across standard libraries.

#include <cmath>
#include <cstdint>
#include <random>

namespace oddr::rng {

using Engine = std::mt19937_64;

/// Independent stream for (seed, stream) via splitmix64 mixing.
inline Engine make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  z ^= z >> 31;
  return Engine{z};
}

/// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Engine& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

inline double uniform(Engine& g, double lo, double hi) { return lo + (hi - lo) * uniform01(g); }

/// Uniform integer in [0, n); n > 0.
inline std::uint64_t uniform_index(Engine& g, std::uint64_t n) {
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = g();
  while (x >= limit) x = g();
  return x % n;
}

inline bool bernoulli(Engine& g, double p) { return uniform01(g) < p; }

/// Knuth's multiplication method; fine for the small per-minute rates used here.
inline int poisson(Engine& g, double lambda) {
  if (lambda <= 0.0) return 0;
  if (lambda > 30.0) {
    // Normal approximation keeps the loop bounded for large rates.
    const double u1 = 1.0 - uniform01(g);
    const double u2 = uniform01(g);
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    const double v = std::round(lambda + std::sqrt(lambda) * z);
    return v < 0.0 ? 0 : static_cast<int>(v);
  }
  const double limit = std::exp(-lambda);
  int k = 0;
  double p = uniform01(g);
  while (p > limit) {
    ++k;
    p *= uniform01(g);
  }
  return k;
}

inline double normal(Engine& g, double mean, double sd) {
  const double u1 = 1.0 - uniform01(g);
  const double u2 = uniform01(g);
  return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace oddr::rng
