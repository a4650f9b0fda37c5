#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string_view>

namespace skillworld {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Seed of a named substream. Each consumer derives its stream from
/// (global seed, name) alone, so adding a consumer never shifts the others.
inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view name,
                                 std::uint64_t counter = 0) {
  return splitmix64(splitmix64(seed) ^ fnv1a64(name) ^ splitmix64(counter + 0x51ED27ULL));
}

inline Rng make_stream(std::uint64_t seed, std::string_view name, std::uint64_t counter = 0) {
  return Rng(stream_seed(seed, name, counter));
}

/// Uniform draw in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

/// Inverse-CDF draw from an unnormalized non-negative weight vector.
inline std::size_t sample_discrete(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw std::invalid_argument("sample_discrete: weights sum to zero");
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

/// Symmetric Dirichlet(alpha) draw of the given dimension.
template <class Out>
void sample_dirichlet(Rng& rng, double alpha, Out& out) {
  std::gamma_distribution<double> g(alpha, 1.0);
  double total = 0.0;
  for (auto& x : out) {
    x = g(rng);
    total += x;
  }
  for (auto& x : out) x /= total;
}

}  // namespace skillworld
