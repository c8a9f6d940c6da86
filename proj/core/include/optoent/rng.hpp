#pragma once

#include <cstdint>
#include <random>

namespace optoent {

using Engine = std::mt19937_64;

/// One SplitMix64 step; advances `state`.
std::uint64_t splitmix64(std::uint64_t& state);

/// Independent child seed for task `index` of a run seeded with `root`.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

/// Mersenne Twister fully seeded from a SplitMix64 stream of `seed`.
Engine make_engine(std::uint64_t seed);

/// Uniform on the open interval (0, 1).
inline double uniform_open(Engine& rng) {
  for (;;) {
    const double u = std::generate_canonical<double, 53>(rng);
    if (u > 0.0) return u;
  }
}

}  // namespace optoent
