// SPDX-License-Identifier: Apache-2.0
#include "h1bkv/quant.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace h1bkv {

std::uint8_t QuantizedVector::code(std::uint32_t i) const {
    if (i >= length) throw std::out_of_range("QuantizedVector::code");
    const std::uint8_t byte = codes[i >> 1];
    return (i & 1u) ? std::uint8_t(byte >> 4) : std::uint8_t(byte & 0x0F);
}

void QuantizedVector::serialize(std::vector<std::uint8_t>& out) const {
    out.push_back(std::uint8_t(length));
    out.push_back(std::uint8_t(length >> 8));
    out.push_back(std::uint8_t(length >> 16));
    out.push_back(std::uint8_t(length >> 24));
    out.push_back(degenerate ? std::uint8_t(1) : std::uint8_t(0));
    out.push_back(zero_point);
    const float s32 = float(scale);
    std::uint32_t bits;
    std::memcpy(&bits, &s32, 4);
    for (int i = 0; i < 4; ++i) {
        out.push_back(std::uint8_t(bits >> (8 * i)));
    }
    out.insert(out.end(), codes.begin(), codes.end());
}

QuantizedVector QuantizedVector::deserialize(const std::uint8_t*& p, const std::uint8_t* end) {
    if (end - p < 10) throw std::runtime_error("truncated quantized vector");
    QuantizedVector q;
    q.length = std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
               std::uint32_t(p[3]) << 24;
    q.degenerate = (p[4] & 1u) != 0;
    q.zero_point = p[5];
    std::uint32_t bits = std::uint32_t(p[6]) | std::uint32_t(p[7]) << 8 |
                         std::uint32_t(p[8]) << 16 | std::uint32_t(p[9]) << 24;
    float s32;
    std::memcpy(&s32, &bits, 4);
    q.scale = double(s32);
    p += 10;
    const std::size_t nbytes = (std::size_t(q.length) + 1) / 2;
    if (std::size_t(end - p) < nbytes) throw std::runtime_error("truncated quantized vector");
    q.codes.assign(p, p + nbytes);
    p += nbytes;
    return q;
}

namespace {

// Round to 49 significant bits. Code offsets are at most 15 in magnitude,
// so every (code - zero_point) * scale product is then exact in double
// arithmetic and re-quantizing a reconstruction reproduces the lattice
// bit for bit. The step loses less than 2^-49 relative precision.
double round_step(double step) {
    int e = 0;
    const double m = std::frexp(step, &e);
    return std::ldexp(std::round(std::ldexp(m, 49)), e - 49);
}

}  // namespace

QuantizedVector quantize(std::span<const double> v) {
    if (v.empty()) {
        throw std::invalid_argument("quantize: empty input");
    }
    double lo = v[0];
    double hi = v[0];
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw std::invalid_argument("quantize: non-finite input");
        }
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    QuantizedVector q;
    q.length = std::uint32_t(v.size());
    q.codes.assign((v.size() + 1) / 2, 0);
    if (hi == lo) {
        q.degenerate = true;
        q.scale = lo;  // full precision: constants reconstruct exactly
        return q;
    }
    const double step = round_step((hi - lo) / 15.0);
    // Clamp in double before narrowing: -min/step can be huge when the
    // range is tiny relative to the offset.
    const double z = std::clamp(std::round(-lo / step), 0.0, 15.0);
    q.scale = step;
    q.zero_point = std::uint8_t(z);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double c = std::clamp(std::round(v[i] / step) + z, 0.0, 15.0);
        const auto nibble = std::uint8_t(c);
        if (i & 1u) {
            q.codes[i >> 1] |= std::uint8_t(nibble << 4);
        } else {
            q.codes[i >> 1] |= nibble;
        }
    }
    return q;
}

std::vector<double> dequantize(const QuantizedVector& q) {
    std::vector<double> out(q.length);
    if (q.degenerate) {
        std::fill(out.begin(), out.end(), q.scale);
        return out;
    }
    for (std::uint32_t i = 0; i < q.length; ++i) {
        out[i] = (double(q.code(i)) - double(q.zero_point)) * q.scale;
    }
    return out;
}

}  // namespace h1bkv
