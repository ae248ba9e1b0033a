// SPDX-License-Identifier: Apache-2.0
#include "h1bkv/rng.hpp"

#include <cmath>
#include <numbers>

namespace h1bkv::rng {

double uniform01(std::uint64_t seed, std::uint64_t i) {
    return double(at(seed, i) >> 11) * 0x1.0p-53;
}

double gaussian(std::uint64_t seed, std::uint64_t i) {
    const std::uint64_t k = i >> 1;
    const double u1 = (double(at(seed, 2 * k) >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = double(at(seed, 2 * k + 1) >> 11) * 0x1.0p-53;      // [0, 1)
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    return (i & 1) ? r * std::sin(t) : r * std::cos(t);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = mix(master);
    s = mix(s ^ (a * 0xD6E8FEB86659FD93ULL));
    s = mix(s ^ (b * 0x9FB21C651E98DF25ULL));
    return s;
}

}  // namespace h1bkv::rng
