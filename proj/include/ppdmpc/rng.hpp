#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace ppdmpc {

// Counter-based randomness: every draw is a pure function of a key, so
// prediction noise can be indexed by (seed, vehicle, step) and replayed
// independent of call order. Box-Muller keeps the normal draws bit-identical
// across platforms (std::normal_distribution is implementation-defined).

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ (b + 0x9e3779b97f4a7c15ull));
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return hash_combine(hash_combine(a, b), c);
}

/// Uniform in (0, 1]: never returns 0, safe under log().
inline double uniform_open01(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

/// Standard normal draw keyed by an arbitrary 64-bit value.
inline double standard_normal(std::uint64_t key) {
  const double u1 = uniform_open01(splitmix64(key ^ 0xd1b54a32d192ed03ull));
  const double u2 = uniform_open01(splitmix64(key ^ 0x8cb92ba72f3d8dd7ull));
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

/// Uniform in [lo, hi) keyed by a 64-bit value.
inline double uniform_range(std::uint64_t key, double lo, double hi) {
  const double u = static_cast<double>(splitmix64(key) >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

}  // namespace ppdmpc
