// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace h1bkv {

/// Sign sketch of `width` bits packed LSB-first into 64-bit words: bit i
/// lives in word i/64 at bit position i%64, and words are little-endian
/// when serialized. Bit value 1 encodes sign +1, 0 encodes -1. Every bit
/// position >= width is stored as zero, so XOR/popcount scoring never
/// depends on padding contents. Immutable in normal use; safe to read
/// from any number of threads.
class PackedSketch {
public:
    PackedSketch() = default;
    explicit PackedSketch(std::uint32_t width);

    // Adopts raw words, zeroing any bits above `width`.
    static PackedSketch from_words(std::uint32_t width, std::vector<std::uint64_t> words);

    // Packs a ±1 vector; entries >= 0 map to bit 1.
    static PackedSketch pack(std::span<const std::int8_t> signs);

    static std::uint32_t word_count(std::uint32_t width) { return (width + 63u) / 64u; }
    static std::uint64_t pad_mask(std::uint32_t width);

    std::uint32_t width() const { return width_; }
    std::span<const std::uint64_t> words() const { return words_; }

    bool bit(std::uint32_t i) const;
    void set_bit(std::uint32_t i, bool value);

    std::vector<std::int8_t> unpack() const;  // ±1 per bit

    PackedSketch complement() const;  // flips the low `width` bits

    // width (u32 LE) followed by word_count little-endian 64-bit words.
    void serialize(std::vector<std::uint8_t>& out) const;
    static PackedSketch deserialize(const std::uint8_t*& p, const std::uint8_t* end);

    bool operator==(const PackedSketch&) const = default;

private:
    std::uint32_t width_ = 0;
    std::vector<std::uint64_t> words_;
};

// ±1 inner product as an exact integer: width - 2 * popcount(a xor b).
std::int64_t hamming_dot(const PackedSketch& a, const PackedSketch& b);

// Normalized ±1 inner product in [-1, 1]. Exactly equals the unpacked
// ±1 dot product divided by width, bit widths need not be word-aligned.
double hamming_score(const PackedSketch& a, const PackedSketch& b);

/// Fixed Gaussian projection, bits x dim row-major. Entry (i, j) is the
/// (i*dim + j)-th variate of the pinned counter-based stream for `seed`:
/// the same (seed, bits, dim) rebuilds the identical matrix anywhere.
/// Immutable after build.
class SketchMatrix {
public:
    static SketchMatrix build(std::uint64_t seed, std::uint32_t bits, std::uint32_t dim);

    std::uint32_t bits() const { return bits_; }
    std::uint32_t dim() const { return dim_; }
    std::uint64_t seed() const { return seed_; }

    std::span<const double> row(std::uint32_t i) const;
    double entry(std::uint32_t i, std::uint32_t j) const {
        return entries_[std::size_t(i) * dim_ + j];
    }

    // sign(R v): bit i is 1 iff row_i . v >= 0 (exact zero maps to +1).
    PackedSketch sketch(std::span<const double> v) const;

private:
    std::uint64_t seed_ = 0;
    std::uint32_t bits_ = 0;
    std::uint32_t dim_ = 0;
    std::vector<double> entries_;
};

SketchMatrix build_matrix(std::uint64_t seed, std::uint32_t bits, std::uint32_t dim);

// Sketches a batch of equal-length vectors, parallel over vectors.
std::vector<PackedSketch> sketch_batch(const SketchMatrix& m,
                                       const std::vector<std::vector<double>>& vs);

struct CurvePoint {
    double cosine = 0.0;
    double empirical = 0.0;
    double theoretical = 0.0;  // 1 - (2/pi) * arccos(cosine)
};

// Monte-Carlo estimate of the expected sketch score as a function of the
// cosine between two vectors. For each target cosine builds a planar unit
// pair with that cosine, draws `trials` independent matrices, and averages
// the score. Scores are accumulated as integer numerators in a fixed
// order, so the result is deterministic in `seed` for any thread count.
std::vector<CurvePoint> estimate_similarity_curve(std::uint32_t bits,
                                                  std::span<const double> cosines,
                                                  std::uint32_t trials,
                                                  std::uint64_t seed);

}  // namespace h1bkv
