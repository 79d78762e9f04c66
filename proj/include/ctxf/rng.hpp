#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace ctxf {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed of the named sub-stream `name`/`index` under a global seed. Every
/// randomized component draws from its own sub-stream so it can be re-run in
/// isolation.
constexpr std::uint64_t substream_seed(std::uint64_t global, std::string_view name,
                                       std::uint64_t index = 0) {
  return mix64(mix64(global ^ fnv1a(name)) + index);
}

inline Rng make_rng(std::uint64_t global, std::string_view name, std::uint64_t index = 0) {
  return Rng(substream_seed(global, name, index));
}

/// Uniform double in [lo, hi). Implemented directly so streams are identical
/// across standard library implementations.
inline double uniform(Rng& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

/// Standard normal via Box-Muller.
inline double normal(Rng& rng) {
  double u1 = uniform(rng, 0.0, 1.0);
  while (u1 <= 0.0) u1 = uniform(rng, 0.0, 1.0);
  const double u2 = uniform(rng, 0.0, 1.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Uniform integer in [0, n).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  return n == 0 ? 0 : rng() % n;
}

}  // namespace ctxf
