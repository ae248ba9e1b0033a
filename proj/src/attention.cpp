// SPDX-License-Identifier: Apache-2.0
#include "h1bkv/attention.hpp"

#include "h1bkv/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace h1bkv {

AttentionConfig AttentionConfig::for_cache(const H1BCache& cache, double tau) {
    const CacheConfig& c = cache.config();
    AttentionConfig cfg;
    cfg.tau = tau;
    cfg.sketch_bits = c.sketch_bits;
    cfg.head_dim = c.head_dim;
    cfg.key_mode = c.key_mode;
    cfg.value_mode = c.value_mode;
    return cfg;
}

namespace {

void check_config(const H1BCache& cache, const AttentionConfig& cfg) {
    const CacheConfig& c = cache.config();
    if (cfg.key_mode != c.key_mode || cfg.value_mode != c.value_mode ||
        cfg.head_dim != c.head_dim ||
        (cfg.key_mode == KeyMode::sketch && cfg.sketch_bits != c.sketch_bits)) {
        throw std::invalid_argument("attention config does not match cache config");
    }
}

}  // namespace

std::vector<double> score_context(std::span<const double> q, const H1BCache& cache,
                                  std::uint32_t layer, std::uint32_t head,
                                  const AttentionConfig& cfg) {
    check_config(cache, cfg);
    if (q.size() != cfg.head_dim) {
        throw std::invalid_argument("score_context: query dimension mismatch");
    }
    const std::size_t n = cache.token_count();
    if (n == 0) {
        throw std::invalid_argument("score_context: empty context");
    }
    std::vector<double> logits(n);
    if (cfg.key_mode == KeyMode::sketch) {
        const PackedSketch qs = cache.matrix(layer, head).sketch(q);
        const auto& keys = cache.key_sketches(layer, head);
#pragma omp parallel for schedule(static)
        for (std::int64_t t = 0; t < std::int64_t(n); ++t) {
            logits[std::size_t(t)] = hamming_score(qs, keys[std::size_t(t)]);
        }
    } else {
        const auto& keys = cache.exact_keys(layer, head);
        const double scale = 1.0 / std::sqrt(double(cfg.head_dim));
#pragma omp parallel for schedule(static)
        for (std::int64_t t = 0; t < std::int64_t(n); ++t) {
            const auto& k = keys[std::size_t(t)];
            double dot = 0.0;
            for (std::size_t j = 0; j < k.size(); ++j) {
                dot += q[j] * k[j];
            }
            logits[std::size_t(t)] = dot * scale;
        }
    }
    return logits;
}

std::vector<double> softmax_scaled(std::span<const double> logits, double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw std::invalid_argument("softmax_scaled: tau must be positive and finite");
    }
    if (logits.empty()) {
        throw std::invalid_argument("softmax_scaled: empty logits");
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> w(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        w[i] = std::exp((logits[i] - m) / tau);
        sum += w[i];
    }
    for (double& x : w) {
        x /= sum;
    }
    return w;
}

std::size_t argmax_index(std::span<const double> xs) {
    if (xs.empty()) {
        throw std::invalid_argument("argmax_index: empty input");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (xs[i] > xs[best]) best = i;  // strict: ties keep the lowest index
    }
    return best;
}

AttentionOutput attend(std::span<const double> q, const H1BCache& cache, std::uint32_t layer,
                       std::uint32_t head, const AttentionConfig& cfg) {
    if (!(cfg.tau > 0.0) || !std::isfinite(cfg.tau)) {
        throw std::invalid_argument("attend: tau must be positive and finite");
    }
    const std::vector<double> logits = score_context(q, cache, layer, head, cfg);
    AttentionOutput out;
    out.weights = softmax_scaled(logits, cfg.tau);
    const std::size_t n = out.weights.size();
    const std::uint32_t d = cfg.head_dim;
    out.output.assign(d, 0.0);

    if (cfg.value_mode == ValueMode::int4) {
        const auto& vq = cache.quantized_values(layer, head);
        std::vector<double> dq(n * d);
#pragma omp parallel for schedule(static)
        for (std::int64_t t = 0; t < std::int64_t(n); ++t) {
            const std::vector<double> row = dequantize(vq[std::size_t(t)]);
            std::copy(row.begin(), row.end(), dq.begin() + std::size_t(t) * d);
        }
        // Column-wise accumulation: each component sums tokens in order,
        // so the result does not depend on thread count.
#pragma omp parallel for schedule(static)
        for (std::int64_t j = 0; j < std::int64_t(d); ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < n; ++t) {
                acc += out.weights[t] * dq[t * d + std::size_t(j)];
            }
            out.output[std::size_t(j)] = acc;
        }
    } else {
        const auto& vals = cache.exact_values(layer, head);
#pragma omp parallel for schedule(static)
        for (std::int64_t j = 0; j < std::int64_t(d); ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < n; ++t) {
                acc += out.weights[t] * vals[t][std::size_t(j)];
            }
            out.output[std::size_t(j)] = acc;
        }
    }
    return out;
}

namespace {

// log-probabilities of softmax(logits/tau)
std::vector<double> log_softmax_scaled(std::span<const double> logits, double tau) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    std::vector<double> lp(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        lp[i] = (logits[i] - m) / tau;
        sum += std::exp(lp[i]);
    }
    const double lse = std::log(sum);
    for (double& x : lp) {
        x -= lse;
    }
    return lp;
}

}  // namespace

double kl_between_scaled_softmax(std::span<const double> logits_p, double tau_p,
                                 std::span<const double> logits_q, double tau_q) {
    if (logits_p.size() != logits_q.size() || logits_p.empty()) {
        throw std::invalid_argument("kl_between_scaled_softmax: size mismatch");
    }
    const std::vector<double> lp = log_softmax_scaled(logits_p, tau_p);
    const std::vector<double> lq = log_softmax_scaled(logits_q, tau_q);
    double kl = 0.0;
    for (std::size_t i = 0; i < lp.size(); ++i) {
        kl += std::exp(lp[i]) * (lp[i] - lq[i]);
    }
    return std::max(kl, 0.0);
}

namespace {

struct PreparedItem {
    std::vector<double> exact_logits;   // q.k / sqrt(d)
    std::vector<double> sketch_logits;  // hamming scores
};

// Callers validate item shapes first; this runs without throwing so the
// item loop can be parallel.
std::vector<PreparedItem> prepare_items(const std::vector<CalibrationItem>& items,
                                        std::uint32_t sketch_bits, std::uint64_t seed) {
    std::vector<PreparedItem> prepared(items.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t ii = 0; ii < std::int64_t(items.size()); ++ii) {
        const CalibrationItem& item = items[std::size_t(ii)];
        const std::uint32_t d = std::uint32_t(item.q.size());
        const std::uint64_t mseed =
            item.matrix_seed ? *item.matrix_seed : rng::derive_seed(seed, std::uint64_t(ii));
        const SketchMatrix m = SketchMatrix::build(mseed, sketch_bits, d);
        const PackedSketch qs = m.sketch(item.q);
        PreparedItem& p = prepared[std::size_t(ii)];
        const double scale = 1.0 / std::sqrt(double(d));
        p.exact_logits.reserve(item.keys.size());
        p.sketch_logits.reserve(item.keys.size());
        for (const auto& k : item.keys) {
            double dot = 0.0;
            for (std::uint32_t j = 0; j < d; ++j) {
                dot += item.q[j] * k[j];
            }
            p.exact_logits.push_back(dot * scale);
            p.sketch_logits.push_back(hamming_score(qs, m.sketch(k)));
        }
    }
    return prepared;
}

}  // namespace

CalibrationResult calibrate_tau(const std::vector<CalibrationItem>& items,
                                std::uint32_t sketch_bits, std::uint64_t seed, double tau_lo,
                                double tau_hi) {
    if (items.empty()) {
        throw std::invalid_argument("calibrate_tau: empty calibration set");
    }
    if (!(tau_lo > 0.0) || !(tau_hi > tau_lo)) {
        throw std::invalid_argument("calibrate_tau: degenerate search range");
    }
    for (const auto& item : items) {
        if (item.q.empty() || item.keys.empty()) {
            throw std::invalid_argument("calibrate_tau: item with empty query or context");
        }
        for (const auto& k : item.keys) {
            if (k.size() != item.q.size()) {
                throw std::invalid_argument("calibrate_tau: key dimension mismatch");
            }
        }
    }
    const std::vector<PreparedItem> prepared = prepare_items(items, sketch_bits, seed);

    std::uint32_t evals = 0;
    std::vector<double> kls(prepared.size());
    auto objective = [&](double tau) {
        ++evals;
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < std::int64_t(prepared.size()); ++i) {
            const PreparedItem& p = prepared[std::size_t(i)];
            kls[std::size_t(i)] =
                kl_between_scaled_softmax(p.exact_logits, 1.0, p.sketch_logits, tau);
        }
        double sum = 0.0;
        for (double k : kls) {
            sum += k;
        }
        return sum / double(prepared.size());
    };

    // Golden-section on x = log(tau), tolerance 1e-3 in log space.
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = std::log(tau_lo);
    double b = std::log(tau_hi);
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = objective(std::exp(c));
    double fd = objective(std::exp(d));
    while (b - a > 1e-3) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = objective(std::exp(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = objective(std::exp(d));
        }
    }
    CalibrationResult r;
    r.tau_star = std::exp((a + b) / 2.0);
    r.kl_at_tau_star = objective(r.tau_star);
    if (tau_lo <= 1.0 && 1.0 <= tau_hi) {
        r.kl_at_one = objective(1.0);
        if (r.kl_at_one < r.kl_at_tau_star) {
            r.tau_star = 1.0;
            r.kl_at_tau_star = r.kl_at_one;
        }
    } else {
        r.kl_at_one = objective(1.0);
    }
    r.evaluations = evals;
    return r;
}

std::vector<CalibrationItem> load_calibration_set(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot open calibration set: " + path);
    }
    nlohmann::json j;
    is >> j;
    if (!j.is_array()) {
        throw std::runtime_error("calibration set must be a JSON array");
    }
    std::vector<CalibrationItem> items;
    items.reserve(j.size());
    for (const auto& rec : j) {
        CalibrationItem item;
        item.q = rec.at("q").get<std::vector<double>>();
        item.keys = rec.at("keys").get<std::vector<std::vector<double>>>();
        item.values = rec.at("values").get<std::vector<std::vector<double>>>();
        items.push_back(std::move(item));
    }
    return items;
}

void save_calibration_set(const std::string& path, const std::vector<CalibrationItem>& items) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& item : items) {
        j.push_back({{"q", item.q}, {"keys", item.keys}, {"values", item.values}});
    }
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot write calibration set: " + path);
    }
    os << j.dump();
}

std::vector<CalibrationItem> generate_calibration_set(std::size_t n_items, std::size_t tokens,
                                                      std::uint32_t dim, std::uint64_t seed) {
    if (n_items == 0 || tokens == 0 || dim == 0) {
        throw std::invalid_argument("generate_calibration_set: empty shape");
    }
    std::vector<CalibrationItem> items(n_items);
    for (std::size_t i = 0; i < n_items; ++i) {
        const std::uint64_t s = rng::derive_seed(seed, i, 1);
        std::uint64_t c = 0;
        CalibrationItem& item = items[i];
        item.q.resize(dim);
        for (auto& x : item.q) {
            x = rng::gaussian(s, c++);
        }
        item.keys.assign(tokens, std::vector<double>(dim));
        for (auto& k : item.keys) {
            for (auto& x : k) {
                x = rng::gaussian(s, c++);
            }
        }
        item.values.assign(tokens, std::vector<double>(dim));
        for (auto& v : item.values) {
            for (auto& x : v) {
                x = rng::gaussian(s, c++);
            }
        }
    }
    return items;
}

}  // namespace h1bkv
