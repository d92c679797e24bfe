#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace geoshift {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream seed for (base, tag...) so that every consumer of
/// the experiment seed draws from its own sequence.
inline uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> tags) {
  uint64_t s = splitmix64(base);
  for (uint64_t t : tags) s = splitmix64(s ^ splitmix64(t + 0x51ed27f1a3c9ULL));
  return s;
}

/// Uniform double in [lo, hi) from 53 random bits; unlike
/// std::uniform_real_distribution the sequence is fixed across standard libraries.
inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi_inclusive) {
  return lo + static_cast<int>(rng() % static_cast<uint64_t>(hi_inclusive - lo + 1));
}

}  // namespace geoshift
