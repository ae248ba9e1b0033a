// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "h1bkv/sketch.hpp"
#include "h1bkv/toymodel.hpp"

#include <cstdint>
#include <span>
#include <vector>

// Serial reference implementations. These are deliberately plain loops
// with no packing, no OpenMP and no cache machinery: tests compare the
// production kernels against them, and the kernel benchmark uses them as
// the baseline. Keep them independent of the paths they check.
namespace h1bkv::ref {

// sign(R v) as an unpacked ±1 vector.
std::vector<std::int8_t> sign_sketch(const SketchMatrix& m, std::span<const double> v);

// Plain ±1 dot product over unpacked sketches, divided by the width.
double pm1_score(std::span<const std::int8_t> a, std::span<const std::int8_t> b);

// Exact logits q.k_t / sqrt(d) over an uncompressed key list.
std::vector<double> dense_logits(std::span<const double> q,
                                 const std::vector<std::vector<double>>& keys);

struct DenseAttention {
    std::vector<double> weights;
    std::vector<double> output;
};

// From-scratch softmax(q.K/sqrt(d) / tau) V over uncompressed K, V.
DenseAttention dense_attention(std::span<const double> q,
                               const std::vector<std::vector<double>>& keys,
                               const std::vector<std::vector<double>>& values, double tau);

// Cache-free forward pass of the toy model: recomputes causal attention
// over the whole prefix at every position and returns per-position
// next-token logits.
std::vector<std::vector<double>> forward_sequence(const ModelWeights& weights,
                                                  std::span<const int> tokens);

}  // namespace h1bkv::ref
