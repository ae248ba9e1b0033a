// SPDX-License-Identifier: Apache-2.0
#include "h1bkv/toymodel.hpp"

#include "h1bkv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace h1bkv {

void ModelConfig::validate() const {
    if (n_layers == 0 || d_model == 0 || n_heads == 0 || vocab_size == 0 || max_context == 0) {
        throw std::invalid_argument("ModelConfig: all dimensions must be >= 1");
    }
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("ModelConfig: d_model must be divisible by n_heads");
    }
}

namespace {

std::vector<double> gaussian_tensor(std::uint64_t seed, std::size_t n, double scale) {
    std::vector<double> t(n);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < std::int64_t(n); ++i) {
        t[std::size_t(i)] = rng::gaussian(seed, std::uint64_t(i)) * scale;
    }
    return t;
}

// out = W x, W row-major rows x cols
void matvec(std::span<const double> w, std::span<const double> x, std::span<double> out,
            std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < std::int64_t(rows); ++r) {
        const double* row = w.data() + std::size_t(r) * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            acc += row[c] * x[c];
        }
        out[std::size_t(r)] = acc;
    }
}

void layer_norm(std::span<const double> x, std::span<const double> gamma,
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

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

}  // namespace

ModelWeights init_weights(const ModelConfig& config, std::uint64_t weight_seed) {
    config.validate();
    ModelWeights w;
    w.config = config;
    w.config.weight_seed = weight_seed;
    const std::size_t d = config.d_model;
    const std::size_t hidden = 4 * d;

    std::uint64_t tensor_idx = 0;
    auto next_seed = [&] { return rng::derive_seed(weight_seed, tensor_idx++); };
    auto gaussian_scaled = [&](std::size_t n, std::size_t fan_in) {
        return gaussian_tensor(next_seed(), n, 1.0 / std::sqrt(double(fan_in)));
    };

    w.tok_embed = gaussian_scaled(std::size_t(config.vocab_size) * d, d);
    w.pos_embed = gaussian_scaled(std::size_t(config.max_context) * d, d);
    w.layers.resize(config.n_layers);
    for (auto& layer : w.layers) {
        layer.ln1_gamma.assign(d, 1.0);
        layer.ln1_beta.assign(d, 0.0);
        layer.ln2_gamma.assign(d, 1.0);
        layer.ln2_beta.assign(d, 0.0);
        layer.wq = gaussian_scaled(d * d, d);
        layer.wk = gaussian_scaled(d * d, d);
        layer.wv = gaussian_scaled(d * d, d);
        layer.wo = gaussian_scaled(d * d, d);
        layer.w_mlp_in = gaussian_scaled(hidden * d, d);
        layer.b_mlp_in.assign(hidden, 0.0);
        layer.w_mlp_out = gaussian_scaled(d * hidden, hidden);
        layer.b_mlp_out.assign(d, 0.0);
    }
    w.lnf_gamma.assign(d, 1.0);
    w.lnf_beta.assign(d, 0.0);
    w.w_head = gaussian_scaled(std::size_t(config.vocab_size) * d, d);
    return w;
}

Decoder::Decoder(const ModelWeights& weights, const CacheConfig& cache_cfg, double tau)
    : w_(weights),
      cache_([&] {
          CacheConfig c = cache_cfg;
          c.n_layers = weights.config.n_layers;
          c.n_heads = weights.config.n_heads;
          c.head_dim = weights.config.head_dim();
          return c;
      }()),
      tau_(tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw std::invalid_argument("Decoder: tau must be positive and finite");
    }
    last_queries_.assign(std::size_t(weights.config.n_layers) * weights.config.n_heads,
                         std::vector<double>(weights.config.head_dim(), 0.0));
}

void Decoder::set_tau_override(std::vector<double> per_head_tau) {
    if (!per_head_tau.empty() &&
        per_head_tau.size() != std::size_t(w_.config.n_layers) * w_.config.n_heads) {
        throw std::invalid_argument("set_tau_override: need one tau per (layer, head)");
    }
    tau_override_ = std::move(per_head_tau);
}

double Decoder::tau_for(std::uint32_t layer, std::uint32_t head) const {
    if (cache_.config().key_mode != KeyMode::sketch) {
        return 1.0;
    }
    if (!tau_override_.empty()) {
        return tau_override_[std::size_t(layer) * w_.config.n_heads + head];
    }
    return tau_;
}

std::vector<double> Decoder::step_logits(int token) {
    const ModelConfig& cfg = w_.config;
    if (pos_ >= cfg.max_context) {
        throw std::invalid_argument("Decoder: context overflow beyond max_context");
    }
    if (token < 0 || std::uint32_t(token) >= cfg.vocab_size) {
        throw std::invalid_argument("Decoder: token out of vocabulary");
    }
    const std::size_t d = cfg.d_model;
    const std::uint32_t hd = cfg.head_dim();

    std::vector<double> x(d);
    for (std::size_t i = 0; i < d; ++i) {
        x[i] = w_.tok_embed[std::size_t(token) * d + i] + w_.pos_embed[pos_ * d + i];
    }

    std::vector<double> normed(d), q(d), k(d), v(d), attn(d), proj(d);
    std::vector<double> hidden(4 * d), mlp(d);
    for (std::uint32_t l = 0; l < cfg.n_layers; ++l) {
        const LayerWeights& lw = w_.layers[l];
        layer_norm(x, lw.ln1_gamma, lw.ln1_beta, normed);
        matvec(lw.wq, normed, q, d, d);
        matvec(lw.wk, normed, k, d, d);
        matvec(lw.wv, normed, v, d, d);
        for (std::uint32_t h = 0; h < cfg.n_heads; ++h) {
            const std::span<const double> kh(k.data() + std::size_t(h) * hd, hd);
            const std::span<const double> vh(v.data() + std::size_t(h) * hd, hd);
            std::vector<double>& qh = last_queries_[std::size_t(l) * cfg.n_heads + h];
            std::copy_n(q.data() + std::size_t(h) * hd, hd, qh.begin());
            cache_.append(l, h, kh, vh);
            const AttentionConfig acfg = AttentionConfig::for_cache(cache_, tau_for(l, h));
            const AttentionOutput out = attend(qh, cache_, l, h, acfg);
            std::copy(out.output.begin(), out.output.end(), attn.begin() + std::size_t(h) * hd);
        }
        matvec(lw.wo, attn, proj, d, d);
        for (std::size_t i = 0; i < d; ++i) {
            x[i] += proj[i];
        }
        layer_norm(x, lw.ln2_gamma, lw.ln2_beta, normed);
        matvec(lw.w_mlp_in, normed, hidden, 4 * d, d);
        for (std::size_t i = 0; i < hidden.size(); ++i) {
            hidden[i] = gelu(hidden[i] + lw.b_mlp_in[i]);
        }
        matvec(lw.w_mlp_out, hidden, mlp, d, 4 * d);
        for (std::size_t i = 0; i < d; ++i) {
            x[i] += mlp[i] + lw.b_mlp_out[i];
        }
    }
    layer_norm(x, w_.lnf_gamma, w_.lnf_beta, normed);
    std::vector<double> logits(cfg.vocab_size);
    matvec(w_.w_head, normed, logits, cfg.vocab_size, d);
    ++pos_;
    return logits;
}

FidelityReport decode_compare(const ModelWeights& weights, std::span<const int> prompt,
                              std::uint32_t steps, const CacheConfig& config_a,
                              const CacheConfig& config_b, double tau) {
    if (prompt.empty()) {
        throw std::invalid_argument("decode_compare: empty prompt");
    }
    if (steps == 0) {
        throw std::invalid_argument("decode_compare: steps must be >= 1");
    }
    if (prompt.size() + steps > weights.config.max_context) {
        throw std::invalid_argument("decode_compare: context overflow beyond max_context");
    }
    Decoder run_a(weights, config_a, tau);
    Decoder run_b(weights, config_b, tau);

    std::vector<double> logits_a, logits_b;
    for (int t : prompt) {
        logits_a = run_a.step_logits(t);
        logits_b = run_b.step_logits(t);
    }

    FidelityReport rep;
    rep.step_kl.reserve(steps);
    std::uint32_t agree = 0;
    for (std::uint32_t s = 0; s < steps; ++s) {
        rep.step_kl.push_back(kl_between_scaled_softmax(logits_a, 1.0, logits_b, 1.0));
        const int next_a = int(argmax_index(logits_a));
        const int next_b = int(argmax_index(logits_b));
        if (next_a == next_b) {
            ++agree;
        }
        rep.tokens_a.push_back(next_a);
        rep.tokens_b.push_back(next_b);
        if (s + 1 < steps) {
            logits_a = run_a.step_logits(next_a);
            logits_b = run_b.step_logits(next_b);
        }
    }
    double sum = 0.0;
    for (double klv : rep.step_kl) {
        sum += klv;
    }
    rep.mean_kl = sum / double(steps);
    std::vector<double> sorted = rep.step_kl;
    std::sort(sorted.begin(), sorted.end());
    rep.median_kl = sorted[sorted.size() / 2];
    rep.top1_agreement = double(agree) / double(steps);
    rep.bytes_a = run_a.cache().byte_size();
    rep.bytes_b = run_b.cache().byte_size();
    return rep;
}

double pseudo_perplexity(const ModelWeights& weights, std::span<const int> corpus,
                         const CacheConfig& config, double tau) {
    if (corpus.size() < 2) {
        throw std::invalid_argument("pseudo_perplexity: corpus must have at least 2 tokens");
    }
    if (corpus.size() > weights.config.max_context) {
        throw std::invalid_argument("pseudo_perplexity: corpus exceeds max_context");
    }
    Decoder run(weights, config, tau);
    double nll = 0.0;
    for (std::size_t t = 0; t + 1 < corpus.size(); ++t) {
        const std::vector<double> logits = run.step_logits(corpus[t]);
        // log-prob of the realized next token
        const double m = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (double v : logits) {
            sum += std::exp(v - m);
        }
        nll -= (logits[std::size_t(corpus[t + 1])] - m) - std::log(sum);
    }
    return std::exp(nll / double(corpus.size() - 1));
}

std::vector<CalibrationItem> collect_calibration_items(const ModelWeights& weights,
                                                       std::span<const int> tokens,
                                                       std::uint64_t cache_master_seed,
                                                       std::uint32_t stride) {
    if (tokens.size() < 2) {
        throw std::invalid_argument("collect_calibration_items: need at least 2 tokens");
    }
    if (stride == 0) {
        throw std::invalid_argument("collect_calibration_items: stride must be >= 1");
    }
    CacheConfig ref_cfg;
    ref_cfg.key_mode = KeyMode::exact;
    ref_cfg.value_mode = ValueMode::reference;
    ref_cfg.master_seed = cache_master_seed;
    Decoder run(weights, ref_cfg, 1.0);

    const std::uint32_t n_heads = weights.config.n_heads;
    std::vector<CalibrationItem> items;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        run.step_logits(tokens[t]);
        const bool snapshot = ((t + 1) % stride == 0) || (t + 1 == tokens.size());
        if (!snapshot || t == 0) {
            continue;
        }
        for (std::uint32_t l = 0; l < weights.config.n_layers; ++l) {
            for (std::uint32_t h = 0; h < n_heads; ++h) {
                CalibrationItem item;
                item.q = run.last_queries_[std::size_t(l) * n_heads + h];
                item.keys = run.cache().exact_keys(l, h);
                item.values = run.cache().exact_values(l, h);
                item.matrix_seed = head_seed(cache_master_seed, l, h);
                items.push_back(std::move(item));
            }
        }
    }
    return items;
}

std::vector<int> synthetic_corpus(std::size_t length, std::uint32_t vocab_size,
                                  std::uint64_t seed) {
    std::vector<int> out(length);
    for (std::size_t i = 0; i < length; ++i) {
        out[i] = int(rng::at(seed, i) % vocab_size);
    }
    return out;
}

namespace {

constexpr char kTensorMagic[4] = {'H', '1', 'B', 'T'};
constexpr std::uint32_t kTensorVersion = 1;

void put_u32le(std::ostream& os, std::uint32_t v) {
    char buf[4] = {char(v), char(v >> 8), char(v >> 16), char(v >> 24)};
    os.write(buf, 4);
}

std::uint32_t take_u32le(std::istream& is) {
    unsigned char buf[4];
    if (!is.read(reinterpret_cast<char*>(buf), 4)) {
        throw std::runtime_error("tensor file: truncated u32");
    }
    return std::uint32_t(buf[0]) | std::uint32_t(buf[1]) << 8 | std::uint32_t(buf[2]) << 16 |
           std::uint32_t(buf[3]) << 24;
}

}  // namespace

void write_tensor_records(const std::string& path, const std::vector<TensorRecord>& records) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot write tensor file: " + path);
    }
    for (const TensorRecord& r : records) {
        os.write(kTensorMagic, 4);
        put_u32le(os, kTensorVersion);
        put_u32le(os, std::uint32_t(r.name.size()));
        os.write(r.name.data(), std::streamsize(r.name.size()));
        put_u32le(os, std::uint32_t(r.dims.size()));
        std::size_t n = 1;
        for (std::uint32_t dim : r.dims) {
            put_u32le(os, dim);
            n *= dim;
        }
        if (n != r.data.size()) {
            throw std::runtime_error("tensor record size does not match dims: " + r.name);
        }
        for (float f : r.data) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32le(os, bits);
        }
    }
}

std::vector<TensorRecord> read_tensor_records(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open tensor file: " + path);
    }
    std::vector<TensorRecord> records;
    while (true) {
        char magic[4];
        if (!is.read(magic, 4)) {
            break;  // clean EOF between records
        }
        if (std::memcmp(magic, kTensorMagic, 4) != 0) {
            throw std::runtime_error("tensor file: bad record magic");
        }
        if (take_u32le(is) != kTensorVersion) {
            throw std::runtime_error("tensor file: unsupported version");
        }
        TensorRecord r;
        const std::uint32_t name_len = take_u32le(is);
        r.name.resize(name_len);
        if (!is.read(r.name.data(), name_len)) {
            throw std::runtime_error("tensor file: truncated name");
        }
        const std::uint32_t ndim = take_u32le(is);
        r.dims.resize(ndim);
        std::size_t n = 1;
        for (auto& dim : r.dims) {
            dim = take_u32le(is);
            n *= dim;
        }
        r.data.resize(n);
        for (auto& f : r.data) {
            const std::uint32_t bits = take_u32le(is);
            std::memcpy(&f, &bits, 4);
        }
        records.push_back(std::move(r));
    }
    return records;
}

namespace {

TensorRecord to_record(const std::string& name, const std::vector<double>& data,
                       std::vector<std::uint32_t> dims) {
    TensorRecord r;
    r.name = name;
    r.dims = std::move(dims);
    r.data.reserve(data.size());
    for (double v : data) {
        r.data.push_back(float(v));
    }
    return r;
}

std::vector<double> from_record(const std::vector<TensorRecord>& records, const std::string& name,
                                std::size_t expected) {
    for (const TensorRecord& r : records) {
        if (r.name == name) {
            if (r.data.size() != expected) {
                throw std::runtime_error("tensor shape mismatch for " + name);
            }
            return {r.data.begin(), r.data.end()};
        }
    }
    throw std::runtime_error("missing tensor: " + name);
}

}  // namespace

void save_weights(const std::string& path, const ModelWeights& w) {
    const std::uint32_t d = w.config.d_model;
    const std::uint32_t hidden = 4 * d;
    std::vector<TensorRecord> recs;
    recs.push_back(to_record("tok_embed", w.tok_embed, {w.config.vocab_size, d}));
    recs.push_back(to_record("pos_embed", w.pos_embed, {w.config.max_context, d}));
    for (std::uint32_t l = 0; l < w.config.n_layers; ++l) {
        const LayerWeights& lw = w.layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        recs.push_back(to_record(p + "ln1_gamma", lw.ln1_gamma, {d}));
        recs.push_back(to_record(p + "ln1_beta", lw.ln1_beta, {d}));
        recs.push_back(to_record(p + "ln2_gamma", lw.ln2_gamma, {d}));
        recs.push_back(to_record(p + "ln2_beta", lw.ln2_beta, {d}));
        recs.push_back(to_record(p + "wq", lw.wq, {d, d}));
        recs.push_back(to_record(p + "wk", lw.wk, {d, d}));
        recs.push_back(to_record(p + "wv", lw.wv, {d, d}));
        recs.push_back(to_record(p + "wo", lw.wo, {d, d}));
        recs.push_back(to_record(p + "w_mlp_in", lw.w_mlp_in, {hidden, d}));
        recs.push_back(to_record(p + "b_mlp_in", lw.b_mlp_in, {hidden}));
        recs.push_back(to_record(p + "w_mlp_out", lw.w_mlp_out, {d, hidden}));
        recs.push_back(to_record(p + "b_mlp_out", lw.b_mlp_out, {d}));
    }
    recs.push_back(to_record("lnf_gamma", w.lnf_gamma, {d}));
    recs.push_back(to_record("lnf_beta", w.lnf_beta, {d}));
    recs.push_back(to_record("w_head", w.w_head, {w.config.vocab_size, d}));
    write_tensor_records(path, recs);
}

ModelWeights load_weights(const std::string& path, const ModelConfig& config) {
    config.validate();
    const auto recs = read_tensor_records(path);
    const std::size_t d = config.d_model;
    const std::size_t hidden = 4 * d;
    ModelWeights w;
    w.config = config;
    w.tok_embed = from_record(recs, "tok_embed", std::size_t(config.vocab_size) * d);
    w.pos_embed = from_record(recs, "pos_embed", std::size_t(config.max_context) * d);
    w.layers.resize(config.n_layers);
    for (std::uint32_t l = 0; l < config.n_layers; ++l) {
        LayerWeights& lw = w.layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        lw.ln1_gamma = from_record(recs, p + "ln1_gamma", d);
        lw.ln1_beta = from_record(recs, p + "ln1_beta", d);
        lw.ln2_gamma = from_record(recs, p + "ln2_gamma", d);
        lw.ln2_beta = from_record(recs, p + "ln2_beta", d);
        lw.wq = from_record(recs, p + "wq", d * d);
        lw.wk = from_record(recs, p + "wk", d * d);
        lw.wv = from_record(recs, p + "wv", d * d);
        lw.wo = from_record(recs, p + "wo", d * d);
        lw.w_mlp_in = from_record(recs, p + "w_mlp_in", hidden * d);
        lw.b_mlp_in = from_record(recs, p + "b_mlp_in", hidden);
        lw.w_mlp_out = from_record(recs, p + "w_mlp_out", d * hidden);
        lw.b_mlp_out = from_record(recs, p + "b_mlp_out", d);
    }
    w.lnf_gamma = from_record(recs, "lnf_gamma", d);
    w.lnf_beta = from_record(recs, "lnf_beta", d);
    w.w_head = from_record(recs, "w_head", std::size_t(config.vocab_size) * d);
    return w;
}

}  // namespace h1bkv
