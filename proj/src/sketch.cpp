// SPDX-License-Identifier: Apache-2.0
#include "h1bkv/sketch.hpp"

#include "h1bkv/rng.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>

namespace h1bkv {

PackedSketch::PackedSketch(std::uint32_t width)
    : width_(width), words_(word_count(width), 0) {}

std::uint64_t PackedSketch::pad_mask(std::uint32_t width) {
    const std::uint32_t rem = width % 64u;
    return rem == 0 ? ~0ULL : (1ULL << rem) - 1;
}

PackedSketch PackedSketch::from_words(std::uint32_t width, std::vector<std::uint64_t> words) {
    if (words.size() != word_count(width)) {
        throw std::invalid_argument("PackedSketch::from_words: wrong word count");
    }
    PackedSketch s;
    s.width_ = width;
    s.words_ = std::move(words);
    if (!s.words_.empty()) {
        s.words_.back() &= pad_mask(width);
    }
    return s;
}

PackedSketch PackedSketch::pack(std::span<const std::int8_t> signs) {
    PackedSketch s(static_cast<std::uint32_t>(signs.size()));
    for (std::uint32_t i = 0; i < signs.size(); ++i) {
        if (signs[i] >= 0) {
            s.words_[i >> 6] |= 1ULL << (i & 63u);
        }
    }
    return s;
}

bool PackedSketch::bit(std::uint32_t i) const {
    if (i >= width_) throw std::out_of_range("PackedSketch::bit");
    return (words_[i >> 6] >> (i & 63u)) & 1u;
}

void PackedSketch::set_bit(std::uint32_t i, bool value) {
    if (i >= width_) throw std::out_of_range("PackedSketch::set_bit");
    const std::uint64_t m = 1ULL << (i & 63u);
    if (value) {
        words_[i >> 6] |= m;
    } else {
        words_[i >> 6] &= ~m;
    }
}

std::vector<std::int8_t> PackedSketch::unpack() const {
    std::vector<std::int8_t> out(width_);
    for (std::uint32_t i = 0; i < width_; ++i) {
        out[i] = ((words_[i >> 6] >> (i & 63u)) & 1u) ? std::int8_t(1) : std::int8_t(-1);
    }
    return out;
}

PackedSketch PackedSketch::complement() const {
    PackedSketch s(width_);
    for (std::size_t w = 0; w < words_.size(); ++w) {
        s.words_[w] = ~words_[w];
    }
    if (!s.words_.empty()) {
        s.words_.back() &= pad_mask(width_);
    }
    return s;
}

namespace {

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 24));
}

void put_u64le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(std::uint8_t(v >> (8 * i)));
    }
}

std::uint32_t get_u32le(const std::uint8_t*& p, const std::uint8_t* end) {
    if (end - p < 4) throw std::runtime_error("truncated input: expected u32");
    std::uint32_t v = std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
                      std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
    p += 4;
    return v;
}

std::uint64_t get_u64le(const std::uint8_t*& p, const std::uint8_t* end) {
    if (end - p < 8) throw std::runtime_error("truncated input: expected u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= std::uint64_t(p[i]) << (8 * i);
    }
    p += 8;
    return v;
}

}  // namespace

void PackedSketch::serialize(std::vector<std::uint8_t>& out) const {
    put_u32le(out, width_);
    for (std::uint64_t w : words_) {
        put_u64le(out, w);
    }
}

PackedSketch PackedSketch::deserialize(const std::uint8_t*& p, const std::uint8_t* end) {
    const std::uint32_t width = get_u32le(p, end);
    std::vector<std::uint64_t> words(word_count(width));
    for (auto& w : words) {
        w = get_u64le(p, end);
    }
    return from_words(width, std::move(words));
}

std::int64_t hamming_dot(const PackedSketch& a, const PackedSketch& b) {
    if (a.width() != b.width() || a.width() == 0) {
        throw std::invalid_argument("hamming_dot: width mismatch");
    }
    const auto wa = a.words();
    const auto wb = b.words();
    std::int64_t mismatches = 0;
    for (std::size_t i = 0; i < wa.size(); ++i) {
        mismatches += std::popcount(wa[i] ^ wb[i]);
    }
    return std::int64_t(a.width()) - 2 * mismatches;
}

double hamming_score(const PackedSketch& a, const PackedSketch& b) {
    return double(hamming_dot(a, b)) / double(a.width());
}

SketchMatrix SketchMatrix::build(std::uint64_t seed, std::uint32_t bits, std::uint32_t dim) {
    if (bits == 0 || dim == 0) {
        throw std::invalid_argument("SketchMatrix::build: bits and dim must be >= 1");
    }
    SketchMatrix m;
    m.seed_ = seed;
    m.bits_ = bits;
    m.dim_ = dim;
    const std::size_t n = std::size_t(bits) * dim;
    m.entries_.resize(n);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < std::int64_t(n); ++i) {
        m.entries_[std::size_t(i)] = rng::gaussian(seed, std::uint64_t(i));
    }
    return m;
}

std::span<const double> SketchMatrix::row(std::uint32_t i) const {
    return {entries_.data() + std::size_t(i) * dim_, dim_};
}

PackedSketch SketchMatrix::sketch(std::span<const double> v) const {
    if (v.size() != dim_) {
        throw std::invalid_argument("SketchMatrix::sketch: dimension mismatch");
    }
    PackedSketch s(bits_);
    for (std::uint32_t i = 0; i < bits_; ++i) {
        const double* r = entries_.data() + std::size_t(i) * dim_;
        double dot = 0.0;
        for (std::uint32_t j = 0; j < dim_; ++j) {
            dot += r[j] * v[j];
        }
        if (dot >= 0.0) {
            s.set_bit(i, true);
        }
    }
    return s;
}

SketchMatrix build_matrix(std::uint64_t seed, std::uint32_t bits, std::uint32_t dim) {
    return SketchMatrix::build(seed, bits, dim);
}

std::vector<PackedSketch> sketch_batch(const SketchMatrix& m,
                                       const std::vector<std::vector<double>>& vs) {
    std::vector<PackedSketch> out(vs.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < std::int64_t(vs.size()); ++i) {
        out[std::size_t(i)] = m.sketch(vs[std::size_t(i)]);
    }
    return out;
}

std::vector<CurvePoint> estimate_similarity_curve(std::uint32_t bits,
                                                  std::span<const double> cosines,
                                                  std::uint32_t trials,
                                                  std::uint64_t seed) {
    if (trials == 0) {
        throw std::invalid_argument("estimate_similarity_curve: trials must be >= 1");
    }
    for (double rho : cosines) {
        if (!(std::fabs(rho) < 1.0)) {
            throw std::invalid_argument("estimate_similarity_curve: cosines must lie in (-1, 1)");
        }
    }
    std::vector<CurvePoint> out(cosines.size());
    std::vector<std::int64_t> numer(trials);
    for (std::size_t ci = 0; ci < cosines.size(); ++ci) {
        const double rho = cosines[ci];
        const double q[2] = {1.0, 0.0};
        const double k[2] = {rho, std::sqrt(1.0 - rho * rho)};
#pragma omp parallel for schedule(static)
        for (std::int64_t t = 0; t < std::int64_t(trials); ++t) {
            const auto m = SketchMatrix::build(rng::derive_seed(seed, ci, std::uint64_t(t)), bits, 2);
            numer[std::size_t(t)] = hamming_dot(m.sketch(q), m.sketch(k));
        }
        std::int64_t sum = 0;
        for (std::int64_t v : numer) {
            sum += v;
        }
        out[ci].cosine = rho;
        out[ci].empirical = double(sum) / (double(bits) * double(trials));
        out[ci].theoretical = 1.0 - (2.0 / std::numbers::pi) * std::acos(rho);
    }
    return out;
}

}  // namespace h1bkv
