#pragma once

#include <cmath>
#include <cstdint>

#include "ctr/common.hpp"

namespace ctr {

inline uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// xoshiro256** with explicit sampling routines. All randomness in the project
// goes through this class so outputs are reproducible down to the bit for a
// fixed seed, independent of the standard library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {
    uint64_t x = seed;
    for (auto& s : state_) s = mix64(x++);
  }

  // Independent deterministic substream.
  Rng fork(uint64_t stream) const { return Rng(mix64(seed_ ^ mix64(stream ^ 0xA24BAED4963EE407ULL))); }

  uint64_t next() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound).
  uint64_t below(uint64_t bound) {
    if (bound == 0) throw InternalError("Rng::below: zero bound");
    const uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  double gaussian() {
    // Polar Box-Muller without caching the spare draw.
    for (;;) {
      const double u = 2.0 * uniform01() - 1.0;
      const double v = 2.0 * uniform01() - 1.0;
      const double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  // Marsaglia-Tsang for shape >= 1, boost trick otherwise.
  double gamma(double shape, double scale = 1.0) {
    if (shape <= 0.0 || scale <= 0.0) throw InternalError("Rng::gamma: nonpositive parameter");
    if (shape < 1.0) {
      const double u = uniform01();
      return gamma(shape + 1.0, scale) * std::pow(u <= 0.0 ? 1e-300 : u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = gaussian();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
  }

  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }

  int64_t poisson(double mean) {
    if (mean < 0.0) throw InternalError("Rng::poisson: negative mean");
    if (mean == 0.0) return 0;
    if (mean <= 60.0) {
      const double limit = std::exp(-mean);
      int64_t k = 0;
      double p = 1.0;
      do {
        ++k;
        p *= uniform01();
      } while (p > limit);
      return k - 1;
    }
    const int64_t n = llround(mean + std::sqrt(mean) * gaussian());
    return n < 0 ? 0 : n;
  }

  int64_t binomial(int64_t n, double p) {
    if (n < 0 || p < 0.0 || p > 1.0) throw InternalError("Rng::binomial: bad parameters");
    int64_t k = 0;
    for (int64_t i = 0; i < n; ++i) k += uniform01() < p ? 1 : 0;
    return k;
  }

  uint64_t seed() const { return seed_; }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t state_[4];
  uint64_t seed_;
};

}  // namespace ctr
