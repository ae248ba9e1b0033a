// SPDX-License-Identifier: Apache-2.0
#include "h1bkv/sketch.hpp"

#include "h1bkv/reference.hpp"
#include "h1bkv/rng.hpp"

#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <numbers>
#include <vector>

using namespace h1bkv;

namespace {

std::vector<double> random_vec(std::uint64_t seed, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = rng::gaussian(seed, i);
    }
    return v;
}

PackedSketch random_sketch(std::uint64_t seed, std::uint32_t width) {
    std::vector<std::uint64_t> words(PackedSketch::word_count(width));
    for (std::size_t i = 0; i < words.size(); ++i) {
        words[i] = rng::at(seed, i);
    }
    return PackedSketch::from_words(width, std::move(words));
}

}  // namespace

TEST_SUITE("sketch") {

TEST_CASE("build_matrix is deterministic and seed-sensitive") {
    const auto a = build_matrix(7, 4, 3);
    const auto b = build_matrix(7, 4, 3);
    bool identical = true;
    for (std::uint32_t i = 0; i < 4; ++i) {
        for (std::uint32_t j = 0; j < 3; ++j) {
            identical = identical && a.entry(i, j) == b.entry(i, j);
        }
    }
    CHECK(identical);

    const auto c = build_matrix(8, 4, 3);
    bool differs = false;
    for (std::uint32_t i = 0; i < 4; ++i) {
        for (std::uint32_t j = 0; j < 3; ++j) {
            differs = differs || a.entry(i, j) != c.entry(i, j);
        }
    }
    CHECK(differs);
}

TEST_CASE("build_matrix rejects empty shapes") {
    CHECK_THROWS_AS(build_matrix(1, 0, 3), std::invalid_argument);
    CHECK_THROWS_AS(build_matrix(1, 4, 0), std::invalid_argument);
}

TEST_CASE("matrix entries have standard-normal sample moments") {
    const auto m = build_matrix(7, 65536, 1);
    double sum = 0.0, sq = 0.0;
    for (std::uint32_t i = 0; i < 65536; ++i) {
        sum += m.entry(i, 0);
        sq += m.entry(i, 0) * m.entry(i, 0);
    }
    const double mean = sum / 65536.0;
    const double var = sq / 65536.0 - mean * mean;
    CHECK(std::fabs(mean) <= 0.02);
    CHECK(std::fabs(var - 1.0) <= 0.05);
}

TEST_CASE("zero vector sketches to all ones") {
    const auto m = build_matrix(3, 70, 5);
    const std::vector<double> zero(5, 0.0);
    const PackedSketch s = m.sketch(zero);
    for (std::uint32_t i = 0; i < 70; ++i) {
        CHECK(s.bit(i));
    }
}

TEST_CASE("sketch is invariant to positive scaling") {
    const auto m = build_matrix(11, 128, 16);
    const auto v = random_vec(5, 16);
    std::vector<double> scaled(v);
    for (auto& x : scaled) {
        x *= 3.5;
    }
    CHECK(m.sketch(v) == m.sketch(scaled));
}

TEST_CASE("negation flips every bit") {
    const auto m = build_matrix(13, 100, 8);
    const auto v = random_vec(17, 8);
    std::vector<double> neg(v);
    for (auto& x : neg) {
        x = -x;
    }
    CHECK(m.sketch(neg) == m.sketch(v).complement());
}

TEST_CASE("sketch rejects dimension mismatch") {
    const auto m = build_matrix(1, 8, 4);
    const std::vector<double> v(5, 1.0);
    CHECK_THROWS_AS(m.sketch(v), std::invalid_argument);
}

TEST_CASE("unpack then pack is the identity") {
    for (std::uint32_t width : {1u, 63u, 64u, 65u, 300u}) {
        const PackedSketch s = random_sketch(width, width);
        CHECK(PackedSketch::pack(s.unpack()) == s);
    }
}

TEST_CASE("padding bits never affect equality or scores") {
    const std::uint32_t width = 300;
    const PackedSketch clean = random_sketch(21, width);
    std::vector<std::uint64_t> junk(clean.words().begin(), clean.words().end());
    junk.back() |= ~PackedSketch::pad_mask(width);  // garbage above bit 300
    const PackedSketch masked = PackedSketch::from_words(width, std::move(junk));
    CHECK(masked == clean);
    const PackedSketch other = random_sketch(22, width);
    CHECK(hamming_score(masked, other) == hamming_score(clean, other));
}

TEST_CASE("hamming_score equals the unpacked ±1 dot product exactly") {
    for (std::uint32_t width : {8u, 64u, 256u, 300u}) {
        for (int trial = 0; trial < 250; ++trial) {
            const PackedSketch a = random_sketch(rng::derive_seed(1, width, trial), width);
            const PackedSketch b = random_sketch(rng::derive_seed(2, width, trial), width);
            const double naive = ref::pm1_score(a.unpack(), b.unpack());
            CHECK(hamming_score(a, b) == naive);
        }
    }
}

TEST_CASE("hand-built 8-bit case") {
    PackedSketch a(8), b(8);
    const int bits_a[8] = {1, 1, 1, 1, 0, 0, 0, 0};
    const int bits_b[8] = {1, 1, 0, 0, 0, 0, 1, 1};
    for (std::uint32_t i = 0; i < 8; ++i) {
        a.set_bit(i, bits_a[i] != 0);
        b.set_bit(i, bits_b[i] != 0);
    }
    CHECK(hamming_score(a, b) == 0.0);  // 4 mismatches: (8 - 2*4) / 8
    CHECK(hamming_score(a, a) == 1.0);
    CHECK(hamming_score(a, a.complement()) == -1.0);
}

TEST_CASE("hamming_score rejects width mismatch") {
    CHECK_THROWS_AS(hamming_score(random_sketch(1, 64), random_sketch(1, 65)),
                    std::invalid_argument);
}

TEST_CASE("serialization layout and round trip") {
    const PackedSketch s = random_sketch(3, 65);
    std::vector<std::uint8_t> bytes;
    s.serialize(bytes);
    CHECK(bytes.size() == 4 + 2 * 8);
    CHECK(bytes[0] == 65);  // width, little-endian
    CHECK(bytes[1] == 0);
    const std::uint8_t* p = bytes.data();
    CHECK(PackedSketch::deserialize(p, p + bytes.size()) == s);
}

TEST_CASE("sketch_batch matches per-vector sketching") {
    const auto m = build_matrix(9, 96, 12);
    std::vector<std::vector<double>> vs;
    for (int i = 0; i < 40; ++i) {
        vs.push_back(random_vec(rng::derive_seed(33, i), 12));
    }
    const auto batch = sketch_batch(m, vs);
    for (std::size_t i = 0; i < vs.size(); ++i) {
        CHECK(batch[i] == m.sketch(vs[i]));
    }
}

TEST_CASE("similarity curve theory values") {
    const double cosines[] = {0.0, 0.5, -0.5};
    const auto curve = estimate_similarity_curve(8, cosines, 1, 1);
    CHECK(curve[0].theoretical == doctest::Approx(0.0).epsilon(1e-12));
    // arccos(1/2) = pi/3, so the expectation is exactly 1/3
    CHECK(curve[1].theoretical == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(curve[2].theoretical == doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("similarity curve matches theory within Monte-Carlo tolerance") {
    const double cosines[] = {-0.5, 0.0, 0.5};
    const auto curve = estimate_similarity_curve(256, cosines, 10000, 77);
    for (const CurvePoint& p : curve) {
        CHECK(std::fabs(p.empirical - p.theoretical) <= 0.01);
    }
}

TEST_CASE("similarity curve is deterministic in the seed") {
    const double cosines[] = {0.25};
    const auto a = estimate_similarity_curve(64, cosines, 500, 5);
    const auto b = estimate_similarity_curve(64, cosines, 500, 5);
    CHECK(a[0].empirical == b[0].empirical);
}

TEST_CASE("similarity curve rejects bad arguments") {
    const double edge[] = {1.0};
    const double ok[] = {0.5};
    CHECK_THROWS_AS(estimate_similarity_curve(64, edge, 10, 1), std::invalid_argument);
    CHECK_THROWS_AS(estimate_similarity_curve(64, ok, 0, 1), std::invalid_argument);
}

}  // TEST_SUITE
