#pragma once

#include <cstdint>
#include <random>

namespace nrm {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for replicate `index` derived from `base_seed`. Counter-style: each
/// (base, index) pair maps to an independent-looking 64-bit seed.
std::uint64_t mix_seed(std::uint64_t base_seed, std::uint64_t index);

/// Uniform draw in [0, 1) built from the top 53 bits, so results do not
/// depend on the standard library's distribution implementation.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

} // namespace nrm
