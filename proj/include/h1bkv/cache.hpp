// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "h1bkv/quant.hpp"
#include "h1bkv/sketch.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace h1bkv {

enum class KeyMode { exact, sketch };
enum class ValueMode { reference, int4 };

const char* to_string(KeyMode m);
const char* to_string(ValueMode m);
KeyMode key_mode_from_string(std::string_view s);      // throws invalid_argument
ValueMode value_mode_from_string(std::string_view s);  // throws invalid_argument

/// Cache shape and storage modes. (exact, reference) is the uncompressed
/// baseline, (sketch, reference) the key-only ablation, (sketch, int4) the
/// full hybrid cache.
struct CacheConfig {
    std::uint32_t n_layers = 1;
    std::uint32_t n_heads = 1;
    std::uint32_t head_dim = 64;
    std::uint32_t sketch_bits = 256;
    KeyMode key_mode = KeyMode::exact;
    ValueMode value_mode = ValueMode::reference;
    std::uint64_t master_seed = 0;
    // Accounting width in bytes for uncompressed key/value elements.
    // Defaults to 2 so reported sizes model an FP16 deployment even though
    // this library computes in doubles.
    std::uint32_t fp_width = 2;

    void validate() const;  // throws invalid_argument

    // Per-token, per-head accounting cost of one stored entry.
    std::uint64_t key_bytes_per_entry() const;    // ceil(bits/8) or head_dim*fp_width
    std::uint64_t value_bytes_per_entry() const;  // ceil(head_dim/2)+5 or head_dim*fp_width
};

// Projection seed for one (layer, head) slot, derived from the master seed
// by the fixed substream rule.
std::uint64_t head_seed(std::uint64_t master_seed, std::uint32_t layer, std::uint32_t head);

/// Append-only per-(layer, head) store of compressed keys and values.
/// Entries are never mutated or removed, so scores for existing tokens are
/// unchanged by later appends. Single writer: append must not run
/// concurrently with reads or other appends; reads are freely concurrent.
class H1BCache {
public:
    explicit H1BCache(CacheConfig cfg);

    const CacheConfig& config() const { return cfg_; }

    // Stores key and value for one token at one slot; the caller sweeps
    // every (layer, head) exactly once per token.
    void append(std::uint32_t layer, std::uint32_t head, std::span<const double> key,
                std::span<const double> value);

    std::size_t token_count() const;
    bool slots_consistent() const;  // every slot holds token_count entries

    // Exact closed-form accounting:
    //   tokens * n_layers * n_heads * (key_bytes + value_bytes)
    std::uint64_t byte_size() const;

    // Fixed per-head projection; only built in sketch mode.
    const SketchMatrix& matrix(std::uint32_t layer, std::uint32_t head) const;

    const std::vector<PackedSketch>& key_sketches(std::uint32_t layer, std::uint32_t head) const;
    const std::vector<std::vector<double>>& exact_keys(std::uint32_t layer,
                                                       std::uint32_t head) const;
    const std::vector<QuantizedVector>& quantized_values(std::uint32_t layer,
                                                         std::uint32_t head) const;
    const std::vector<std::vector<double>>& exact_values(std::uint32_t layer,
                                                         std::uint32_t head) const;

    // Debug dump: magic "H1BC", version u32 LE, length-prefixed JSON with
    // the config plus token_count, then per-slot entries in
    // (layer, head, token) order. Sketches and quantized vectors use their
    // own serialization; exact vectors are length-prefixed f64 LE.
    void dump(std::ostream& os) const;
    static H1BCache load(std::istream& is);

private:
    struct Slot {
        std::vector<PackedSketch> key_sketches;
        std::vector<std::vector<double>> exact_keys;
        std::vector<QuantizedVector> quantized_values;
        std::vector<std::vector<double>> exact_values;
    };

    Slot& slot(std::uint32_t layer, std::uint32_t head);
    const Slot& slot(std::uint32_t layer, std::uint32_t head) const;
    void check_slot(std::uint32_t layer, std::uint32_t head) const;

    CacheConfig cfg_;
    std::vector<Slot> slots_;
    std::vector<SketchMatrix> matrices_;
};

struct ComponentBytes {
    std::uint64_t key_bytes_per_entry = 0;
    std::uint64_t value_bytes_per_entry = 0;
    std::uint64_t key_total = 0;
    std::uint64_t value_total = 0;
    std::uint64_t total = 0;
};

struct CompressionReport {
    std::uint64_t tokens = 0;
    ComponentBytes a;
    ComponentBytes b;
    double ratio = 1.0;  // a.total / b.total
    double key_ratio = 1.0;
    double value_ratio = 1.0;
};

// Byte accounting of config A versus config B over `tokens` tokens.
// Shapes (n_layers, n_heads, head_dim) must match.
CompressionReport compression_report(const CacheConfig& a, const CacheConfig& b,
                                     std::uint64_t tokens);

}  // namespace h1bkv
