#pragma once

// Random streams.
//
// Every stream is a std::mt19937_64, whose output sequence is fixed by the
// C++ standard, so results are identical across compilers and platforms.
// Variates are derived from raw 64-bit draws by the helpers below instead of
// <random> distributions, whose algorithms are implementation-defined.
//
// Independent streams for parallel tasks are keyed by
//     task_seed(master, index) = splitmix64(master + 0x9E3779B97F4A7C15 * (index + 1))
// where splitmix64 is the finalizer of Steele, Lea & Flood's SplitMix64.

#include <cmath>
#include <cstdint>
#include <random>

namespace nnergm {

using Engine = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t task_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return splitmix64(master + 0x9E3779B97F4A7C15ULL * (index + 1));
}

/// Stream reserved for design draws (parameter vectors, starting points).
/// Disjoint from every task_seed(master, i) with i < 2^63.
constexpr std::uint64_t design_seed(std::uint64_t master) noexcept {
  return task_seed(master, ~std::uint64_t{0});
}

inline Engine make_engine(std::uint64_t seed) { return Engine{seed}; }

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

inline double uniform(Engine& eng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(eng);
}

/// Unbiased integer in [0, n) by rejection. n must be positive.
inline std::uint64_t uniform_index(Engine& eng, std::uint64_t n) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = eng();
  } while (x >= limit);
  return x % n;
}

inline bool bernoulli(Engine& eng, double p) { return uniform01(eng) < p; }

/// Standard normal via Box-Muller (one value per call, second discarded).
inline double standard_normal(Engine& eng) {
  double u1;
  do {
    u1 = uniform01(eng);
  } while (u1 <= 0.0);
  const double u2 = uniform01(eng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace nnergm
