#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace foldlm {

/// Deterministic 64-bit RNG (splitmix64). The same seed and call sequence
/// produces the same values on every platform; `pos` counts draws so a
/// stream can be audited or resumed.
struct RngState {
    std::uint64_t state = 0;
    std::uint64_t pos = 0;

    explicit RngState(std::uint64_t seed = 0) : state(seed) {}

    std::uint64_t next_u64() {
        state += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        ++pos;
        return z ^ (z >> 31);
    }
};

/// Uniform draw in [0, 1) using the top 53 bits.
inline double rng_uniform(RngState& s) {
    return static_cast<double>(s.next_u64() >> 11) * 0x1.0p-53;
}

/// Standard normal via the Box-Muller transform of two uniforms. Always
/// consumes exactly two draws; no cached spare.
inline double rng_gaussian(RngState& s) {
    const double u1 = rng_uniform(s);
    const double u2 = rng_uniform(s);
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(2.0 * std::numbers::pi * u2);
}

/// Uniform integer in [0, n).
inline std::uint64_t rng_below(RngState& s, std::uint64_t n) {
    if (n == 0) return 0;
    // Rejection keeps the distribution exactly uniform.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = s.next_u64();
    while (v >= limit) v = s.next_u64();
    return v % n;
}

}  // namespace foldlm
