// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "h1bkv/cache.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace h1bkv {

/// Scoring and mixing configuration for one attended head. Must agree with
/// the cache it is applied to; build via for_cache to keep them in sync.
struct AttentionConfig {
    double tau = 1.0;  // softmax temperature, > 0
    std::uint32_t sketch_bits = 256;
    std::uint32_t head_dim = 64;
    KeyMode key_mode = KeyMode::exact;
    ValueMode value_mode = ValueMode::reference;

    static AttentionConfig for_cache(const H1BCache& cache, double tau);
};

struct AttentionOutput {
    std::vector<double> weights;  // probabilities over context tokens
    std::vector<double> output;   // weighted value mix, length head_dim
};

// Context logits for one query. Sketch keys score as the normalized ±1
// inner product of sign sketches, in [-1, 1]; exact keys score as
// q.k / sqrt(head_dim). The token loop is parallel; every logit is an
// independent slot write, so results do not depend on thread count.
std::vector<double> score_context(std::span<const double> q, const H1BCache& cache,
                                  std::uint32_t layer, std::uint32_t head,
                                  const AttentionConfig& cfg);

// softmax(logits/tau) with max subtraction, then the weighted sum of the
// stored values (dequantized in int4 mode).
AttentionOutput attend(std::span<const double> q, const H1BCache& cache, std::uint32_t layer,
                       std::uint32_t head, const AttentionConfig& cfg);

// Max-subtracted softmax of logits/tau. Ties in the maximum are irrelevant
// here; argmax_index below breaks them by lowest index.
std::vector<double> softmax_scaled(std::span<const double> logits, double tau);

std::size_t argmax_index(std::span<const double> xs);

// KL(softmax(p/tau_p) || softmax(q/tau_q)) evaluated in log space, so it
// stays finite even when one side is very sharp.
double kl_between_scaled_softmax(std::span<const double> logits_p, double tau_p,
                                 std::span<const double> logits_q, double tau_q);

/// One calibration context: a query against an uncompressed key list.
/// Values ride along for completeness of the file format. matrix_seed, when
/// set, pins the projection used for this item (e.g. the deployed head's);
/// otherwise the item index derives one from the calibration seed.
struct CalibrationItem {
    std::vector<double> q;
    std::vector<std::vector<double>> keys;
    std::vector<std::vector<double>> values;
    std::optional<std::uint64_t> matrix_seed;
};

struct CalibrationResult {
    double tau_star = 1.0;
    double kl_at_one = 0.0;
    double kl_at_tau_star = 0.0;
    std::uint32_t evaluations = 0;
};

// Picks tau minimizing the mean KL from each item's exact attention
// distribution to its sketched one, by golden-section search on log(tau)
// to 1e-3 log tolerance. When 1 lies in [tau_lo, tau_hi] the result never
// loses to tau = 1: the searched optimum is compared against it and the
// better of the two is returned.
CalibrationResult calibrate_tau(const std::vector<CalibrationItem>& items,
                                std::uint32_t sketch_bits, std::uint64_t seed,
                                double tau_lo = 1e-3, double tau_hi = 1e3);

// Calibration set file: JSON array of {q: [...], keys: [[...]], values: [[...]]}.
std::vector<CalibrationItem> load_calibration_set(const std::string& path);
void save_calibration_set(const std::string& path, const std::vector<CalibrationItem>& items);

// Synthetic Gaussian calibration contexts, deterministic in `seed`.
std::vector<CalibrationItem> generate_calibration_set(std::size_t n_items, std::size_t tokens,
                                                      std::uint32_t dim, std::uint64_t seed);

}  // namespace h1bkv
