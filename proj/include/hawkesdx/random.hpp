#pragma once

// Platform-independent draws on top of std::mt19937_64. The standard
// distributions are implementation-defined, which would make seeded outputs
// differ between standard libraries.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace hawkesdx {

using Rng = std::mt19937_64;

// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return double(rng() >> 11) * 0x1.0p-53; }

// Uniform on (0, 1].
inline double uniform01_open_left(Rng& rng) { return 1.0 - uniform01(rng); }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Uniform integer in [0, n) by rejection.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do x = rng(); while (x >= limit);
    return x % n;
}

inline double exponential(Rng& rng, double rate) { return -std::log(uniform01_open_left(rng)) / rate; }

// Box-Muller; one of the pair is discarded to keep the generator stateless.
inline double standard_normal(Rng& rng) {
    const double u1 = uniform01_open_left(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace hawkesdx
