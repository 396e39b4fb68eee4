#pragma once

#include <cstdint>
#include <string_view>

#include "ctr/rng.hpp"

namespace ctr {

// Seeded FNV-1a with a splitmix finalizer. Stable across platforms and
// standard library versions, unlike std::hash.
inline uint64_t hash_bytes(std::string_view s, uint64_t seed) {
  uint64_t h = 1469598103934665603ULL ^ mix64(seed);
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return mix64(h);
}

// Uniform in [0, 1) derived from the string hash.
inline double hash01(std::string_view s, uint64_t seed) {
  return static_cast<double>(hash_bytes(s, seed) >> 11) * 0x1.0p-53;
}

}  // namespace ctr
