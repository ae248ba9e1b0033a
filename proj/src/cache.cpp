// SPDX-License-Identifier: Apache-2.0
#include "h1bkv/cache.hpp"

#include "h1bkv/rng.hpp"

#include <json.hpp>

#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace h1bkv {

const char* to_string(KeyMode m) {
    return m == KeyMode::exact ? "exact" : "sketch";
}

const char* to_string(ValueMode m) {
    return m == ValueMode::reference ? "reference" : "int4";
}

KeyMode key_mode_from_string(std::string_view s) {
    if (s == "exact") return KeyMode::exact;
    if (s == "sketch") return KeyMode::sketch;
    throw std::invalid_argument("unknown key mode: " + std::string(s));
}

ValueMode value_mode_from_string(std::string_view s) {
    if (s == "reference") return ValueMode::reference;
    if (s == "int4") return ValueMode::int4;
    throw std::invalid_argument("unknown value mode: " + std::string(s));
}

void CacheConfig::validate() const {
    if (n_layers == 0 || n_heads == 0 || head_dim == 0) {
        throw std::invalid_argument("CacheConfig: layers, heads and head_dim must be >= 1");
    }
    if (key_mode == KeyMode::sketch && sketch_bits == 0) {
        throw std::invalid_argument("CacheConfig: sketch mode requires sketch_bits >= 1");
    }
    if (fp_width == 0) {
        throw std::invalid_argument("CacheConfig: fp_width must be >= 1");
    }
}

std::uint64_t CacheConfig::key_bytes_per_entry() const {
    if (key_mode == KeyMode::sketch) {
        return (std::uint64_t(sketch_bits) + 7) / 8;
    }
    return std::uint64_t(head_dim) * fp_width;
}

std::uint64_t CacheConfig::value_bytes_per_entry() const {
    if (value_mode == ValueMode::int4) {
        // packed codes + f32 scale + one byte for zero-point and flags
        return (std::uint64_t(head_dim) + 1) / 2 + 5;
    }
    return std::uint64_t(head_dim) * fp_width;
}

std::uint64_t head_seed(std::uint64_t master_seed, std::uint32_t layer, std::uint32_t head) {
    return rng::derive_seed(master_seed, layer, head);
}

H1BCache::H1BCache(CacheConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    slots_.resize(std::size_t(cfg_.n_layers) * cfg_.n_heads);
    if (cfg_.key_mode == KeyMode::sketch) {
        matrices_.reserve(slots_.size());
        for (std::uint32_t l = 0; l < cfg_.n_layers; ++l) {
            for (std::uint32_t h = 0; h < cfg_.n_heads; ++h) {
                matrices_.push_back(SketchMatrix::build(head_seed(cfg_.master_seed, l, h),
                                                        cfg_.sketch_bits, cfg_.head_dim));
            }
        }
    }
}

void H1BCache::check_slot(std::uint32_t layer, std::uint32_t head) const {
    if (layer >= cfg_.n_layers || head >= cfg_.n_heads) {
        throw std::invalid_argument("H1BCache: layer or head index out of range");
    }
}

H1BCache::Slot& H1BCache::slot(std::uint32_t layer, std::uint32_t head) {
    check_slot(layer, head);
    return slots_[std::size_t(layer) * cfg_.n_heads + head];
}

const H1BCache::Slot& H1BCache::slot(std::uint32_t layer, std::uint32_t head) const {
    check_slot(layer, head);
    return slots_[std::size_t(layer) * cfg_.n_heads + head];
}

void H1BCache::append(std::uint32_t layer, std::uint32_t head, std::span<const double> key,
                      std::span<const double> value) {
    Slot& s = slot(layer, head);
    if (key.size() != cfg_.head_dim || value.size() != cfg_.head_dim) {
        throw std::invalid_argument("H1BCache::append: dimension mismatch");
    }
    if (cfg_.key_mode == KeyMode::sketch) {
        s.key_sketches.push_back(matrix(layer, head).sketch(key));
    } else {
        s.exact_keys.emplace_back(key.begin(), key.end());
    }
    if (cfg_.value_mode == ValueMode::int4) {
        s.quantized_values.push_back(quantize(value));
    } else {
        s.exact_values.emplace_back(value.begin(), value.end());
    }
}

std::size_t H1BCache::token_count() const {
    const Slot& s = slots_.front();
    return cfg_.key_mode == KeyMode::sketch ? s.key_sketches.size() : s.exact_keys.size();
}

bool H1BCache::slots_consistent() const {
    const std::size_t n = token_count();
    for (const Slot& s : slots_) {
        const std::size_t keys =
            cfg_.key_mode == KeyMode::sketch ? s.key_sketches.size() : s.exact_keys.size();
        const std::size_t vals = cfg_.value_mode == ValueMode::int4 ? s.quantized_values.size()
                                                                    : s.exact_values.size();
        if (keys != n || vals != n) return false;
    }
    return true;
}

std::uint64_t H1BCache::byte_size() const {
    return std::uint64_t(token_count()) * cfg_.n_layers * cfg_.n_heads *
           (cfg_.key_bytes_per_entry() + cfg_.value_bytes_per_entry());
}

const SketchMatrix& H1BCache::matrix(std::uint32_t layer, std::uint32_t head) const {
    check_slot(layer, head);
    if (cfg_.key_mode != KeyMode::sketch) {
        throw std::invalid_argument("H1BCache::matrix: cache is not in sketch mode");
    }
    return matrices_[std::size_t(layer) * cfg_.n_heads + head];
}

const std::vector<PackedSketch>& H1BCache::key_sketches(std::uint32_t layer,
                                                        std::uint32_t head) const {
    return slot(layer, head).key_sketches;
}

const std::vector<std::vector<double>>& H1BCache::exact_keys(std::uint32_t layer,
                                                             std::uint32_t head) const {
    return slot(layer, head).exact_keys;
}

const std::vector<QuantizedVector>& H1BCache::quantized_values(std::uint32_t layer,
                                                               std::uint32_t head) const {
    return slot(layer, head).quantized_values;
}

const std::vector<std::vector<double>>& H1BCache::exact_values(std::uint32_t layer,
                                                               std::uint32_t head) const {
    return slot(layer, head).exact_values;
}

namespace {

constexpr char kMagic[4] = {'H', '1', 'B', 'C'};
constexpr std::uint32_t kVersion = 1;

void write_u32le(std::ostream& os, std::uint32_t v) {
    char buf[4] = {char(v), char(v >> 8), char(v >> 16), char(v >> 24)};
    os.write(buf, 4);
}

std::uint32_t read_u32le(std::istream& is) {
    unsigned char buf[4];
    if (!is.read(reinterpret_cast<char*>(buf), 4)) {
        throw std::runtime_error("cache dump: truncated u32");
    }
    return std::uint32_t(buf[0]) | std::uint32_t(buf[1]) << 8 | std::uint32_t(buf[2]) << 16 |
           std::uint32_t(buf[3]) << 24;
}

void write_exact_vector(std::vector<std::uint8_t>& out, const std::vector<double>& v) {
    const std::uint32_t n = std::uint32_t(v.size());
    out.push_back(std::uint8_t(n));
    out.push_back(std::uint8_t(n >> 8));
    out.push_back(std::uint8_t(n >> 16));
    out.push_back(std::uint8_t(n >> 24));
    for (double x : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, 8);
        for (int i = 0; i < 8; ++i) {
            out.push_back(std::uint8_t(bits >> (8 * i)));
        }
    }
}

std::vector<double> read_exact_vector(const std::uint8_t*& p, const std::uint8_t* end) {
    if (end - p < 4) throw std::runtime_error("cache dump: truncated vector");
    const std::uint32_t n = std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
                            std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
    p += 4;
    if (std::size_t(end - p) < std::size_t(n) * 8) {
        throw std::runtime_error("cache dump: truncated vector");
    }
    std::vector<double> v(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
            bits |= std::uint64_t(p[b]) << (8 * b);
        }
        std::memcpy(&v[i], &bits, 8);
        p += 8;
    }
    return v;
}

nlohmann::json config_to_json(const CacheConfig& c, std::size_t tokens) {
    return nlohmann::json{{"n_layers", c.n_layers},
                          {"n_heads", c.n_heads},
                          {"head_dim", c.head_dim},
                          {"sketch_bits", c.sketch_bits},
                          {"key_mode", to_string(c.key_mode)},
                          {"value_mode", to_string(c.value_mode)},
                          {"master_seed", c.master_seed},
                          {"fp_width", c.fp_width},
                          {"token_count", tokens}};
}

}  // namespace

void H1BCache::dump(std::ostream& os) const {
    os.write(kMagic, 4);
    write_u32le(os, kVersion);
    const std::string cfg = config_to_json(cfg_, token_count()).dump();
    write_u32le(os, std::uint32_t(cfg.size()));
    os.write(cfg.data(), std::streamsize(cfg.size()));

    std::vector<std::uint8_t> body;
    for (std::uint32_t l = 0; l < cfg_.n_layers; ++l) {
        for (std::uint32_t h = 0; h < cfg_.n_heads; ++h) {
            const Slot& s = slot(l, h);
            const std::size_t n = token_count();
            for (std::size_t t = 0; t < n; ++t) {
                if (cfg_.key_mode == KeyMode::sketch) {
                    s.key_sketches[t].serialize(body);
                } else {
                    write_exact_vector(body, s.exact_keys[t]);
                }
                if (cfg_.value_mode == ValueMode::int4) {
                    s.quantized_values[t].serialize(body);
                } else {
                    write_exact_vector(body, s.exact_values[t]);
                }
            }
        }
    }
    os.write(reinterpret_cast<const char*>(body.data()), std::streamsize(body.size()));
}

H1BCache H1BCache::load(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("cache dump: bad magic");
    }
    if (read_u32le(is) != kVersion) {
        throw std::runtime_error("cache dump: unsupported version");
    }
    const std::uint32_t cfg_len = read_u32le(is);
    std::string cfg_text(cfg_len, '\0');
    if (!is.read(cfg_text.data(), cfg_len)) {
        throw std::runtime_error("cache dump: truncated config");
    }
    const auto j = nlohmann::json::parse(cfg_text);
    CacheConfig cfg;
    cfg.n_layers = j.at("n_layers").get<std::uint32_t>();
    cfg.n_heads = j.at("n_heads").get<std::uint32_t>();
    cfg.head_dim = j.at("head_dim").get<std::uint32_t>();
    cfg.sketch_bits = j.at("sketch_bits").get<std::uint32_t>();
    cfg.key_mode = key_mode_from_string(j.at("key_mode").get<std::string>());
    cfg.value_mode = value_mode_from_string(j.at("value_mode").get<std::string>());
    cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    cfg.fp_width = j.at("fp_width").get<std::uint32_t>();
    const auto tokens = j.at("token_count").get<std::size_t>();

    std::vector<std::uint8_t> body(std::istreambuf_iterator<char>(is), {});
    const std::uint8_t* p = body.data();
    const std::uint8_t* end = p + body.size();

    H1BCache cache(cfg);
    for (std::uint32_t l = 0; l < cfg.n_layers; ++l) {
        for (std::uint32_t h = 0; h < cfg.n_heads; ++h) {
            Slot& s = cache.slot(l, h);
            for (std::size_t t = 0; t < tokens; ++t) {
                if (cfg.key_mode == KeyMode::sketch) {
                    s.key_sketches.push_back(PackedSketch::deserialize(p, end));
                } else {
                    s.exact_keys.push_back(read_exact_vector(p, end));
                }
                if (cfg.value_mode == ValueMode::int4) {
                    s.quantized_values.push_back(QuantizedVector::deserialize(p, end));
                } else {
                    s.exact_values.push_back(read_exact_vector(p, end));
                }
            }
        }
    }
    if (p != end) {
        throw std::runtime_error("cache dump: trailing bytes");
    }
    return cache;
}

CompressionReport compression_report(const CacheConfig& a, const CacheConfig& b,
                                     std::uint64_t tokens) {
    a.validate();
    b.validate();
    if (a.n_layers != b.n_layers || a.n_heads != b.n_heads || a.head_dim != b.head_dim) {
        throw std::invalid_argument("compression_report: shape mismatch");
    }
    const std::uint64_t slots = std::uint64_t(a.n_layers) * a.n_heads * tokens;
    auto component = [slots](const CacheConfig& c) {
        ComponentBytes cb;
        cb.key_bytes_per_entry = c.key_bytes_per_entry();
        cb.value_bytes_per_entry = c.value_bytes_per_entry();
        cb.key_total = cb.key_bytes_per_entry * slots;
        cb.value_total = cb.value_bytes_per_entry * slots;
        cb.total = cb.key_total + cb.value_total;
        return cb;
    };
    CompressionReport r;
    r.tokens = tokens;
    r.a = component(a);
    r.b = component(b);
    auto ratio = [](std::uint64_t x, std::uint64_t y) {
        return (x == 0 && y == 0) ? 1.0 : double(x) / double(y);
    };
    r.ratio = ratio(r.a.total, r.b.total);
    r.key_ratio = ratio(r.a.key_total, r.b.key_total);
    r.value_ratio = ratio(r.a.value_total, r.b.value_total);
    return r;
}

}  // namespace h1bkv
