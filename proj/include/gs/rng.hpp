#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace gs {

// Seeded generator with fixed value mappings. std::mt19937_64 is specified
// bit-exactly by the standard; the distributions below are written out by
// hand because std::uniform_real_distribution and friends are
// implementation-defined and would break cross-toolchain reproducibility.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1): 53-bit mantissa construction.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection-free modulo is fine here: n is
  // always tiny compared to 2^64, so the bias is far below f64 resolution
  // and, more importantly, this stays reproducible.
  int64_t uniform_int(int64_t n) { return static_cast<int64_t>(eng_() % static_cast<uint64_t>(n)); }

  // Standard normal via Box-Muller. One value per call, no caching, so the
  // stream position is a pure function of call count.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Derives an independent stream, e.g. one per parameter tensor, so adding
  // a parameter never shifts the draws of the others.
  Rng fork(uint64_t salt) {
    uint64_t s = eng_() ^ (salt * 0x9e3779b97f4a7c15ull);
    return Rng(s);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace gs
