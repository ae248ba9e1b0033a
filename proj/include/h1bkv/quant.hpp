// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace h1bkv {

/// 4-bit affine quantization of one value vector. Codes are unsigned
/// nibbles in [0, 15], two per byte, low nibble first; for odd lengths the
/// final high nibble is zero.
///
/// Non-degenerate map, rounding half away from zero (std::round):
///   step       = (max(v) - min(v)) / 15, kept to 49 significant bits
///   zero_point = round(-min(v) / step), clamped to [0, 15]
///   code_i     = clamp(round(v_i / step) + zero_point, 0, 15)
/// and reconstruction is (code_i - zero_point) * step. The 49-bit step
/// makes reconstruction products exact in doubles, so quantizing a
/// reconstruction reproduces codes, zero point and step bit for bit.
///
/// Degenerate map (max == min): `degenerate` is set, `scale` carries the
/// constant itself at full precision, codes and zero_point are all zero,
/// and reconstruction returns the constant exactly.
///
/// The scale slot is accounted as 4 bytes and narrows to f32 in the wire
/// format below.
struct QuantizedVector {
    std::uint32_t length = 0;
    bool degenerate = false;
    std::uint8_t zero_point = 0;      // in [0, 15]
    double scale = 0.0;               // step, or the constant when degenerate
    std::vector<std::uint8_t> codes;  // ceil(length / 2) bytes

    std::uint8_t code(std::uint32_t i) const;

    // length (u32 LE), flags (u8, bit 0 = degenerate), zero_point (u8),
    // scale (f32 LE), then the ceil(length/2) code bytes.
    void serialize(std::vector<std::uint8_t>& out) const;
    static QuantizedVector deserialize(const std::uint8_t*& p, const std::uint8_t* end);

    bool operator==(const QuantizedVector&) const = default;
};

// Throws std::invalid_argument on empty or non-finite input.
QuantizedVector quantize(std::span<const double> v);

std::vector<double> dequantize(const QuantizedVector& q);

}  // namespace h1bkv
