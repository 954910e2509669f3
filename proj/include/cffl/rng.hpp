// SPDX-License-Identifier: Apache-2.0
//
// Seeded random number utilities. All draws go through explicit helpers
// built on mt19937_64 so a given seed produces bit-identical streams on
// every platform (std:: distributions are implementation-defined and are
// deliberately not used).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace cffl {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic seed derivation: fold any number of stream labels into a
// base seed. Used to give every Monte Carlo draw a reproducible address.
inline std::uint64_t seed_mix(std::uint64_t base) { return splitmix64(base); }

template <typename... Rest>
std::uint64_t seed_mix(std::uint64_t base, std::uint64_t next, Rest... rest) {
  return seed_mix(splitmix64(base ^ (next + 0x9e3779b97f4a7c15ULL + (base << 6) + (base >> 2))),
                  rest...);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform on [0,1) with 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range, rejection-sampled so it is unbiased.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1ULL;
    if (range == 0) return static_cast<std::int64_t>(engine_());  // full range
    const std::uint64_t reject_above = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= reject_above);
    return lo + static_cast<std::int64_t>(v % range);
  }

  // Box-Muller, one deviate per pair of uniforms (no cached state).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Uniform point in a disk of given radius centered at the origin.
  void disk(double radius, double& dx, double& dy) {
    const double r = radius * std::sqrt(uniform());
    const double th = 2.0 * M_PI * uniform();
    dx = r * std::cos(th);
    dy = r * std::sin(th);
  }

  // k distinct indices from {0..n-1}, partial Fisher-Yates, sorted output.
  std::vector<int> subset(int n, int k) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < k; ++i) {
      const int j = static_cast<int>(uniform_int(i, n - 1));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cffl
