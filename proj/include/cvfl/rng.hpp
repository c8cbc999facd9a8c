#pragma once

// Seeded randomness helpers. All distributions are implemented here rather
// than with std::*_distribution so that a given seed yields the same stream
// on every standard library.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "cvfl/errors.hpp"

namespace cvfl {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Mix a base seed with up to two stream tags into an independent sub-seed.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                    std::uint64_t substream = 0) {
  return splitmix64(splitmix64(splitmix64(base) ^ stream) ^ substream);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [lo, hi], inclusive. Rejection keeps it unbiased.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    const std::uint64_t span = hi - lo + 1;
    if (span == 0) return engine_();  // full range
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return lo + v % span;
  }

  int uniform_index(int n) {
    return static_cast<int>(uniform_int(0, static_cast<std::uint64_t>(n) - 1));
  }

  /// Standard normal via Box-Muller (two uniforms per draw).
  double normal() {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  /// Normal restricted to [lo, hi] by rejection.
  double truncated_normal(double mean, double sigma, double lo, double hi) {
    if (!(lo < hi)) throw DomainError("truncated_normal: requires lo < hi");
    double x;
    do {
      x = normal(mean, sigma);
    } while (x < lo || x > hi);
    return x;
  }

  /// Exponential with unit mean.
  double exponential() { return -std::log(1.0 - uniform01()); }

  /// Poisson count (Knuth's product method; fine for the rates used here).
  int poisson(double lambda) {
    if (lambda < 0.0) throw DomainError("poisson: negative rate");
    if (lambda > 500.0) throw DomainError("poisson: rate too large for product method");
    const double limit = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform01();
    } while (p > limit);
    return k - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = uniform_int(0, i - 1);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cvfl
