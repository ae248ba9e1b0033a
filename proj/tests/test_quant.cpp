// SPDX-License-Identifier: Apache-2.0
#include "h1bkv/quant.hpp"

#include "h1bkv/rng.hpp"

#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <limits>
#include <vector>

using namespace h1bkv;

namespace {

// brute-force round-trip check: worst per-element error beyond half a
// step plus an ulp-scale slack on the step itself
double worst_excess(std::span<const double> v) {
    const QuantizedVector q = quantize(v);
    const std::vector<double> back = dequantize(q);
    const double half = q.degenerate ? 0.0 : q.scale / 2.0;
    const double slack = q.degenerate ? 0.0 : q.scale * 0x1p-40;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < v.size(); ++i) {
        worst = std::max(worst, std::fabs(v[i] - back[i]) - half - slack);
    }
    return worst;
}

std::vector<double> random_vec(std::uint64_t seed, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = lo + (hi - lo) * rng::uniform01(seed, i);
    }
    return v;
}

}  // namespace

TEST_SUITE("quant") {

TEST_CASE("constant zero vector reconstructs exactly") {
    const std::vector<double> v(4, 0.0);
    const QuantizedVector q = quantize(v);
    CHECK(q.degenerate);
    CHECK(q.zero_point == 0);
    for (std::uint32_t i = 0; i < 4; ++i) {
        CHECK(q.code(i) == 0);
    }
    CHECK(dequantize(q) == v);
}

TEST_CASE("constant nonzero vector reconstructs exactly") {
    const std::vector<double> v(7, 0.1);
    CHECK(dequantize(quantize(v)) == v);
}

TEST_CASE("(0, 15) quantizes losslessly") {
    const std::vector<double> v = {0.0, 15.0};
    const QuantizedVector q = quantize(v);
    CHECK(q.scale == 1.0);
    CHECK(q.zero_point == 0);
    CHECK(q.code(0) == 0);
    CHECK(q.code(1) == 15);
    CHECK(dequantize(q) == v);
}

TEST_CASE("(-1, 1) uses half-away rounding for the zero point") {
    const std::vector<double> v = {-1.0, 1.0};
    const QuantizedVector q = quantize(v);
    CHECK(q.scale == doctest::Approx(2.0 / 15.0).epsilon(1e-12));
    CHECK(q.zero_point == 8);  // round(7.5) away from zero
    CHECK(worst_excess(v) <= 0.0);
}

TEST_CASE("rejects empty and non-finite input") {
    CHECK_THROWS_AS(quantize(std::vector<double>{}), std::invalid_argument);
    CHECK_THROWS_AS(quantize(std::vector<double>{1.0, std::nan("")}), std::invalid_argument);
    CHECK_THROWS_AS(quantize(std::vector<double>{std::numeric_limits<double>::infinity()}),
                    std::invalid_argument);
}

TEST_CASE("round-trip error stays within half a step on random vectors") {
    for (int trial = 0; trial < 1000; ++trial) {
        const auto v = random_vec(rng::derive_seed(3, trial), 64, -3.0, 3.0);
        CHECK(worst_excess(v) <= 0.0);
    }
}

TEST_CASE("adversarial vectors stay within the bound") {
    std::vector<double> outlier(64, 0.0);
    outlier[63] = 10.0;
    CHECK(worst_excess(outlier) <= 0.0);

    std::vector<double> alternating(64);
    for (std::size_t i = 0; i < alternating.size(); ++i) {
        alternating[i] = (i % 2 == 0) ? 3.0 : -3.0;
    }
    CHECK(worst_excess(alternating) <= 0.0);
}

TEST_CASE("quantize(dequantize(q)) reproduces q exactly") {
    for (int trial = 0; trial < 200; ++trial) {
        const auto v = random_vec(rng::derive_seed(5, trial), 33, -2.0, 2.0);
        const QuantizedVector q = quantize(v);
        const QuantizedVector q2 = quantize(dequantize(q));
        CHECK(q2 == q);
    }
    const QuantizedVector qc = quantize(std::vector<double>(5, 2.5));
    CHECK(quantize(dequantize(qc)) == qc);
}

TEST_CASE("dequantize is a fixed point of the code lattice") {
    const auto v = random_vec(11, 64, -3.0, 3.0);
    const QuantizedVector q = quantize(v);
    const std::vector<double> once = dequantize(q);
    const std::vector<double> twice = dequantize(quantize(once));
    CHECK(once == twice);
}

TEST_CASE("shift equivariance up to one lattice step") {
    // The representable window sits around zero (zero_point is 4 bits), so
    // the property holds for shifts that keep the range straddling zero.
    for (double shift : {0.3, -0.45, 0.8}) {
        const auto v = random_vec(rng::derive_seed(9, std::uint64_t(shift * 20 + 40)), 32,
                                  -1.0, 1.0);
        std::vector<double> shifted(v);
        for (auto& x : shifted) {
            x += shift;
        }
        const std::vector<double> base = dequantize(quantize(v));
        const std::vector<double> moved = dequantize(quantize(shifted));
        const double step = quantize(v).scale;
        CHECK(quantize(shifted).scale == doctest::Approx(step).epsilon(1e-9));
        for (std::size_t i = 0; i < v.size(); ++i) {
            CHECK(std::fabs(moved[i] - (base[i] + shift)) <= 1.5 * step + 1e-9);
        }
    }
}

TEST_CASE("odd lengths leave the final high nibble zero") {
    const std::vector<double> v = {1.0, 2.0, 3.0, 4.0, 5.0};
    const QuantizedVector q = quantize(v);
    CHECK(q.codes.size() == 3);
    CHECK((q.codes.back() & 0xF0) == 0);
}

TEST_CASE("serialization round trip is idempotent") {
    const auto v = random_vec(13, 9, -4.0, 4.0);
    const QuantizedVector q = quantize(v);
    std::vector<std::uint8_t> bytes;
    q.serialize(bytes);
    CHECK(bytes.size() == 4 + 1 + 1 + 4 + 5);
    const std::uint8_t* p = bytes.data();
    const QuantizedVector back = QuantizedVector::deserialize(p, p + bytes.size());
    CHECK(back.length == q.length);
    CHECK(back.codes == q.codes);
    CHECK(back.zero_point == q.zero_point);
    CHECK(back.degenerate == q.degenerate);
    std::vector<std::uint8_t> again;
    back.serialize(again);
    CHECK(again == bytes);
}

}  // TEST_SUITE
