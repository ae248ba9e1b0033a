// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace h1bkv::rng {

// Counter-based generator: every draw is a pure function of (seed, counter),
// so streams are random-access, thread-safe and identical across platforms.
// The uniform source is the SplitMix64 output function; Gaussian variates
// come from Box-Muller over consecutive counter pairs. This algorithm is
// fixed: serialized artifacts (projection matrices, toy-model weights)
// reproduce bit-for-bit from their seeds.

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

// i-th output of the SplitMix64 stream started at `seed`.
constexpr std::uint64_t at(std::uint64_t seed, std::uint64_t i) {
    return mix(seed + (i + 1) * kGolden);
}

// Uniform double in [0, 1) with 53 mantissa bits.
double uniform01(std::uint64_t seed, std::uint64_t i);

// i-th standard-normal variate of the stream. Box-Muller: variates 2k and
// 2k+1 are the cos/sin pair built from uniform counters 2k and 2k+1, with
// u1 nudged into (0, 1] so the log stays finite.
double gaussian(std::uint64_t seed, std::uint64_t i);

// Substream seed for index pair (a, b) under a master seed. Used to give
// every (layer, head) its own projection matrix, every Monte-Carlo trial
// its own matrix sample, and every weight tensor its own stream.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

}  // namespace h1bkv::rng
