#pragma once

#include <cstdint>
#include <random>

namespace facile {

using Rng = std::mt19937_64;

// Child seed for stream `index` of a run seeded with `seed`. Task-level seeds
// use seed ^ index directly so serial and parallel schedules agree.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) { return seed ^ index; }

// splitmix64 finalizer; used where unrelated streams need decorrelated seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline bool bernoulli(Rng& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::bernoulli_distribution(p)(rng);
}

}  // namespace facile
