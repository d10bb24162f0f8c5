// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded random streams. Every consumer derives its own substream from the
// global seed plus a few integer tags, so results never depend on the order in
// which layers or tensors are visited.

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mrvn {

using Rng = std::mt19937_64;

/// Purpose tags for substream derivation.
enum class Stream : std::uint64_t {
    Init = 1,
    WeightQuant = 2,
    GradQuant = 3,
    Shuffle = 4,
    Data = 5,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t h = splitmix64(seed);
    for (auto t : tags) {
        h = splitmix64(h ^ splitmix64(t));
    }
    return h;
}

inline Rng substream(std::uint64_t seed, Stream purpose, std::uint64_t a = 0, std::uint64_t b = 0) {
    return Rng{derive_seed(seed, {static_cast<std::uint64_t>(purpose), a, b})};
}

/// Uniform double in [0, 1).
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace mrvn
