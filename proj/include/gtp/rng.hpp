// Copyright (C) 2026 The GTP Engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace gtp {

// SplitMix64. Every random quantity in the engine comes from one of these,
// seeded from the run seed plus a per-component stream id.
class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Independent stream for (seed, stream_id).
    static constexpr SplitMix64 substream(std::uint64_t seed, std::uint64_t stream_id) noexcept {
        return SplitMix64(seed ^ mix(stream_id + 0x9E3779B97F4A7C15ULL));
    }

    constexpr std::uint64_t next() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    // Uniform in [0, 1) with 53 random bits.
    constexpr double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

private:
    std::uint64_t state_;
};

// Stream ids used across the engine.
namespace streams {
inline constexpr std::uint64_t weights = 1;
inline constexpr std::uint64_t image = 2;
inline constexpr std::uint64_t random_selection = 3;
inline constexpr std::uint64_t bench = 4;
}  // namespace streams

}  // namespace gtp
