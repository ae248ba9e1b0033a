// SPDX-License-Identifier: Apache-2.0
#include "h1bkv/reference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace h1bkv::ref {

std::vector<std::int8_t> sign_sketch(const SketchMatrix& m, std::span<const double> v) {
    if (v.size() != m.dim()) {
        throw std::invalid_argument("ref::sign_sketch: dimension mismatch");
    }
    std::vector<std::int8_t> out(m.bits());
    for (std::uint32_t i = 0; i < m.bits(); ++i) {
        double dot = 0.0;
        for (std::uint32_t j = 0; j < m.dim(); ++j) {
            dot += m.entry(i, j) * v[j];
        }
        out[i] = dot >= 0.0 ? std::int8_t(1) : std::int8_t(-1);
    }
    return out;
}

double pm1_score(std::span<const std::int8_t> a, std::span<const std::int8_t> b) {
    if (a.size() != b.size() || a.empty()) {
        throw std::invalid_argument("ref::pm1_score: width mismatch");
    }
    std::int64_t dot = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += std::int64_t(a[i]) * std::int64_t(b[i]);
    }
    return double(dot) / double(a.size());
}

std::vector<double> dense_logits(std::span<const double> q,
                                 const std::vector<std::vector<double>>& keys) {
    const double scale = 1.0 / std::sqrt(double(q.size()));
    std::vector<double> logits(keys.size());
    for (std::size_t t = 0; t < keys.size(); ++t) {
        double dot = 0.0;
        for (std::size_t j = 0; j < q.size(); ++j) {
            dot += q[j] * keys[t][j];
        }
        logits[t] = dot * scale;
    }
    return logits;
}

DenseAttention dense_attention(std::span<const double> q,
                               const std::vector<std::vector<double>>& keys,
                               const std::vector<std::vector<double>>& values, double tau) {
    if (keys.empty() || keys.size() != values.size()) {
        throw std::invalid_argument("ref::dense_attention: bad context");
    }
    DenseAttention out;
    out.weights = dense_logits(q, keys);
    const double m = *std::max_element(out.weights.begin(), out.weights.end());
    double sum = 0.0;
    for (double& w : out.weights) {
        w = std::exp((w - m) / tau);
        sum += w;
    }
    for (double& w : out.weights) {
        w /= sum;
    }
    out.output.assign(q.size(), 0.0);
    for (std::size_t t = 0; t < values.size(); ++t) {
        for (std::size_t j = 0; j < q.size(); ++j) {
            out.output[j] += out.weights[t] * values[t][j];
        }
    }
    return out;
}

namespace {

void layer_norm_row(std::span<const double> x, std::span<const double> gamma,
                    std::span<const double> beta, std::span<double> out) {
    const std::size_t d = x.size();
    double mean = 0.0;
    for (double v : x) {
        mean += v;
    }
    mean /= double(d);
    double var = 0.0;
    for (double v : x) {
        var += (v - mean) * (v - mean);
    }
    var /= double(d);
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (std::size_t i = 0; i < d; ++i) {
        out[i] = (x[i] - mean) * inv * gamma[i] + beta[i];
    }
}

void matvec_row(std::span<const double> w, std::span<const double> x, std::span<double> out,
                std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            acc += w[r * cols + c] * x[c];
        }
        out[r] = acc;
    }
}

}  // namespace

std::vector<std::vector<double>> forward_sequence(const ModelWeights& w,
                                                  std::span<const int> tokens) {
    const ModelConfig& cfg = w.config;
    if (tokens.empty() || tokens.size() > cfg.max_context) {
        throw std::invalid_argument("ref::forward_sequence: bad token count");
    }
    const std::size_t n = tokens.size();
    const std::size_t d = cfg.d_model;
    const std::uint32_t hd = cfg.head_dim();
    const double scale = 1.0 / std::sqrt(double(hd));

    std::vector<std::vector<double>> x(n, std::vector<double>(d));
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t i = 0; i < d; ++i) {
            x[t][i] = w.tok_embed[std::size_t(tokens[t]) * d + i] + w.pos_embed[t * d + i];
        }
    }

    std::vector<std::vector<double>> q(n, std::vector<double>(d)), k = q, v = q;
    std::vector<double> normed(d), attn(d), proj(d), hidden(4 * d), mlp(d);
    for (std::uint32_t l = 0; l < cfg.n_layers; ++l) {
        const LayerWeights& lw = w.layers[l];
        for (std::size_t t = 0; t < n; ++t) {
            layer_norm_row(x[t], lw.ln1_gamma, lw.ln1_beta, normed);
            matvec_row(lw.wq, normed, q[t], d, d);
            matvec_row(lw.wk, normed, k[t], d, d);
            matvec_row(lw.wv, normed, v[t], d, d);
        }
        for (std::size_t t = 0; t < n; ++t) {
            for (std::uint32_t h = 0; h < cfg.n_heads; ++h) {
                const std::size_t off = std::size_t(h) * hd;
                // causal: position t attends to 0..t
                std::vector<double> logits(t + 1);
                for (std::size_t s = 0; s <= t; ++s) {
                    double dot = 0.0;
                    for (std::uint32_t j = 0; j < hd; ++j) {
                        dot += q[t][off + j] * k[s][off + j];
                    }
                    logits[s] = dot * scale;
                }
                const double mx = *std::max_element(logits.begin(), logits.end());
                double sum = 0.0;
                for (double& lg : logits) {
                    lg = std::exp(lg - mx);
                    sum += lg;
                }
                for (std::uint32_t j = 0; j < hd; ++j) {
                    double acc = 0.0;
                    for (std::size_t s = 0; s <= t; ++s) {
                        acc += logits[s] * v[s][off + j];
                    }
                    attn[off + j] = acc / sum;
                }
            }
            matvec_row(lw.wo, attn, proj, d, d);
            for (std::size_t i = 0; i < d; ++i) {
                x[t][i] += proj[i];
            }
            layer_norm_row(x[t], lw.ln2_gamma, lw.ln2_beta, normed);
            matvec_row(lw.w_mlp_in, normed, hidden, 4 * d, d);
            for (std::size_t i = 0; i < hidden.size(); ++i) {
                const double z = hidden[i] + lw.b_mlp_in[i];
                hidden[i] = 0.5 * z * (1.0 + std::erf(z / std::sqrt(2.0)));
            }
            matvec_row(lw.w_mlp_out, hidden, mlp, d, 4 * d);
            for (std::size_t i = 0; i < d; ++i) {
                x[t][i] += mlp[i] + lw.b_mlp_out[i];
            }
        }
    }

    std::vector<std::vector<double>> logits(n, std::vector<double>(cfg.vocab_size));
    for (std::size_t t = 0; t < n; ++t) {
        layer_norm_row(x[t], w.lnf_gamma, w.lnf_beta, normed);
        matvec_row(w.w_head, normed, logits[t], cfg.vocab_size, d);
    }
    return logits;
}

}  // namespace h1bkv::ref
