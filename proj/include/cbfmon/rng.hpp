#pragma once

#include <cstdint>

namespace cbfmon {

// Counter-based 64-bit generator (SplitMix64 finalizer). Stateless: the k-th
// draw of a stream is a pure function of (seed, k), so parallel and sequential
// generation produce identical sequences on every platform.
inline std::uint64_t rng_u64(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + (index + 1) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Uniform double in [0, 1) using the top 53 bits.
inline double rng_uniform(std::uint64_t seed, std::uint64_t index) {
    return static_cast<double>(rng_u64(seed, index) >> 11) * 0x1.0p-53;
}

// Uniform double in [lo, hi].
inline double rng_uniform(std::uint64_t seed, std::uint64_t index, double lo, double hi) {
    return lo + (hi - lo) * rng_uniform(seed, index);
}

// Derives an independent substream seed, e.g. one per trace.
inline std::uint64_t rng_substream(std::uint64_t seed, std::uint64_t index) {
    return rng_u64(seed, index);
}

} // namespace cbfmon
