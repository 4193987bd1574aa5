#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <utility>

namespace gossipgrid {

// All randomness goes through std::mt19937_64, whose output sequence is fixed
// by the standard. The distribution helpers below replace the std::*_distribution
// templates, whose algorithms differ between standard library vendors.
using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Purpose tags for derived streams; keep values stable, they feed the hash.
enum class StreamPurpose : std::uint64_t {
  kTopology = 1,
  kPartition = 2,
  kInitModel = 3,
  kBatchSampler = 4,
  kTrainDecision = 5,
  kDataset = 6,
};

/// Seed for an independent stream identified by (seed, node, round, purpose).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t node, std::uint64_t round,
                                    StreamPurpose purpose) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ node);
  h = splitmix64(h ^ (round * 0x632be59bd9b4e019ULL));
  return splitmix64(h ^ static_cast<std::uint64_t>(purpose));
}

/// Uniform double in [0, 1) built from the top 53 bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, bound), bound > 0. Rejection sampling, no modulo bias.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r = rng();
  while (r >= limit) r = rng();
  return r % bound;
}

/// Standard normal via Box-Muller (one value per call).
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Fisher-Yates shuffle with a portable index draw.
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace gossipgrid
