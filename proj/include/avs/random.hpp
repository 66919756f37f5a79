#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace avs {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-based seed derivation: every stream is a pure function of the root
/// seed and its labels, so draws do not depend on execution order.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t counter) {
  return splitmix64(root ^ splitmix64(counter));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                                 std::uint64_t counter = 0) {
  return derive_seed(derive_seed(root, fnv1a(label)), counter);
}

/// Uniform double in [0,1) from a 64-bit hash.
inline double unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

using Rng = std::mt19937_64;

}  // namespace avs
