// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "h1bkv/attention.hpp"
#include "h1bkv/cache.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace h1bkv {

/// Desk-scale decoder-only transformer: pre-norm blocks, GELU MLP with 4x
/// expansion, learned positional embeddings, byte-level vocabulary, greedy
/// decoding. It exists to drive the cache under test, not to model
/// language.
struct ModelConfig {
    std::uint32_t n_layers = 2;
    std::uint32_t d_model = 64;
    std::uint32_t n_heads = 4;
    std::uint32_t vocab_size = 256;
    std::uint32_t max_context = 256;
    std::uint64_t weight_seed = 1;

    std::uint32_t head_dim() const { return d_model / n_heads; }
    void validate() const;  // throws invalid_argument
};

struct LayerWeights {
    std::vector<double> ln1_gamma, ln1_beta;
    std::vector<double> ln2_gamma, ln2_beta;
    std::vector<double> wq, wk, wv, wo;          // d_model x d_model, row-major [out][in]
    std::vector<double> w_mlp_in, b_mlp_in;      // 4*d_model x d_model, 4*d_model
    std::vector<double> w_mlp_out, b_mlp_out;    // d_model x 4*d_model, d_model
};

struct ModelWeights {
    ModelConfig config;
    std::vector<double> tok_embed;  // vocab x d_model
    std::vector<double> pos_embed;  // max_context x d_model
    std::vector<LayerWeights> layers;
    std::vector<double> lnf_gamma, lnf_beta;
    std::vector<double> w_head;     // vocab x d_model
};

// Gaussian init scaled by 1/sqrt(fan_in); gammas are 1, betas and biases 0.
// Each tensor draws from its own substream of weight_seed, so the result is
// a pure function of (config, weight_seed).
ModelWeights init_weights(const ModelConfig& config, std::uint64_t weight_seed);

/// Incremental greedy-decoding state over one cache. Feeding a token
/// appends its K/V to every (layer, head) slot and returns the next-token
/// logits. tau applies to sketched key scores; exact-key scoring uses the
/// standard 1/sqrt(d) scale with tau 1, which is what tau is calibrated
/// against.
class Decoder {
public:
    Decoder(const ModelWeights& weights, const CacheConfig& cache_cfg, double tau);

    // Experimental: per-(layer, head) override of the global tau, indexed
    // layer * n_heads + head. Empty means use the global value.
    void set_tau_override(std::vector<double> per_head_tau);

    std::vector<double> step_logits(int token);  // throws past max_context
    std::size_t position() const { return pos_; }
    const H1BCache& cache() const { return cache_; }

private:
    friend std::vector<CalibrationItem> collect_calibration_items(const ModelWeights&,
                                                                  std::span<const int>,
                                                                  std::uint64_t, std::uint32_t);
    double tau_for(std::uint32_t layer, std::uint32_t head) const;

    const ModelWeights& w_;
    H1BCache cache_;
    double tau_;
    std::vector<double> tau_override_;
    std::size_t pos_ = 0;
    // Per-(layer, head) queries of the most recent step, layer-major.
    std::vector<std::vector<double>> last_queries_;
};

struct FidelityReport {
    std::vector<double> step_kl;   // KL(A || B) of next-token distributions
    double mean_kl = 0.0;
    double median_kl = 0.0;
    double top1_agreement = 0.0;   // fraction of steps with matching argmax
    std::uint64_t bytes_a = 0;
    std::uint64_t bytes_b = 0;
    std::vector<int> tokens_a;     // greedy continuations
    std::vector<int> tokens_b;
};

// Runs greedy decode twice with identical weights, once per cache config,
// and compares the per-step next-token distributions. Each run follows its
// own greedy choices, so divergence compounds like it would in deployment.
FidelityReport decode_compare(const ModelWeights& weights, std::span<const int> prompt,
                              std::uint32_t steps, const CacheConfig& config_a,
                              const CacheConfig& config_b, double tau);

// exp(mean NLL) of the corpus continuation under the model with the given
// cache. Only meaningful as a ratio between cache configs.
double pseudo_perplexity(const ModelWeights& weights, std::span<const int> corpus,
                         const CacheConfig& config, double tau);

// Replays `tokens` through a reference-mode decode and captures (q, K, V)
// snapshots for every (layer, head) at a stride of decode steps, each
// pinned to its head's deployed projection seed. The result feeds
// calibrate_tau with contexts shaped like the ones decoding will see.
std::vector<CalibrationItem> collect_calibration_items(const ModelWeights& weights,
                                                       std::span<const int> tokens,
                                                       std::uint64_t cache_master_seed,
                                                       std::uint32_t stride = 8);

// Deterministic pseudo-random byte corpus for demos and tests.
std::vector<int> synthetic_corpus(std::size_t length, std::uint32_t vocab_size,
                                  std::uint64_t seed);

// Tensor file: per record, magic "H1BT", version u32 LE, name length u32 +
// UTF-8 name, ndim u32, dims u32[ndim], then row-major f32 LE payload. A
// weights file is a concatenation of records.
struct TensorRecord {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data;
};

void write_tensor_records(const std::string& path, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> read_tensor_records(const std::string& path);

// Weight round-trip through the tensor file format (f32 payloads, so
// loading narrows the doubles).
void save_weights(const std::string& path, const ModelWeights& weights);
ModelWeights load_weights(const std::string& path, const ModelConfig& config);

}  // namespace h1bkv
