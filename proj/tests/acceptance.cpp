// SPDX-License-Identifier: Apache-2.0
// End-to-end acceptance suite. Each check prints one PASS/FAIL line; the
// process exits nonzero if any check fails.

#include "h1bkv/attention.hpp"
#include "h1bkv/cache.hpp"
#include "h1bkv/cli.hpp"
#include "h1bkv/quant.hpp"
#include "h1bkv/reference.hpp"
#include "h1bkv/report.hpp"
#include "h1bkv/rng.hpp"
#include "h1bkv/sketch.hpp"
#include "h1bkv/toymodel.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

using namespace h1bkv;
using nlohmann::json;

namespace {

int g_failures = 0;

void report(int index, const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%d] %-28s %s (%s)\n", index, name.c_str(), ok ? "PASS" : "FAIL",
                detail.c_str());
    if (!ok) {
        ++g_failures;
    }
}

std::vector<double> random_vec(std::uint64_t seed, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = rng::gaussian(seed, i);
    }
    return v;
}

// ---- 1. sketch score expectation -----------------------------------------

void check_lsh_expectation() {
    const auto t0 = std::chrono::steady_clock::now();
    const double cosines[] = {-0.9, -0.5, 0.0, 0.5, 0.9};
    const auto curve = estimate_similarity_curve(256, cosines, 10000, 2026);
    double max_err = 0.0;
    for (const CurvePoint& p : curve) {
        max_err = std::max(max_err, std::fabs(p.empirical - p.theoretical));
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream detail;
    detail << "max |emp-theory| = " << max_err << " <= 0.01, " << secs << " s";
    report(1, "sketch score expectation", max_err <= 0.01 && secs < 30.0, detail.str());
}

// ---- 2. kernel equivalence ------------------------------------------------

PackedSketch random_sketch(std::uint64_t seed, std::uint32_t width) {
    std::vector<std::uint64_t> words(PackedSketch::word_count(width));
    for (std::size_t i = 0; i < words.size(); ++i) {
        words[i] = rng::at(seed, i);
    }
    return PackedSketch::from_words(width, std::move(words));
}

void check_kernel_equivalence() {
    std::size_t mismatches = 0;
    std::size_t trials_run = 0;
    for (std::uint32_t width : {8u, 64u, 256u, 300u}) {
        for (int trial = 0; trial < 1000; ++trial) {
            const PackedSketch a = random_sketch(rng::derive_seed(11, width, trial), width);
            const PackedSketch b = random_sketch(rng::derive_seed(12, width, trial), width);
            if (hamming_score(a, b) != ref::pm1_score(a.unpack(), b.unpack())) {
                ++mismatches;
            }
            ++trials_run;
        }
    }
    std::ostringstream detail;
    detail << mismatches << " mismatches in " << trials_run << " trials, zero tolerance";
    report(2, "bitwise kernel equivalence", mismatches == 0, detail.str());
}

// ---- 3. quantization round trip --------------------------------------------

void check_quant_bound() {
    // bound: half a step plus an ulp-scale slack on the step
    double worst_excess = -std::numeric_limits<double>::infinity();
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> v(64);
        const std::uint64_t s = rng::derive_seed(21, trial);
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = -3.0 + 6.0 * rng::uniform01(s, i);
        }
        const QuantizedVector q = quantize(v);
        const auto back = dequantize(q);
        const double half = q.degenerate ? 0.0 : q.scale / 2.0;
        const double slack = q.degenerate ? 0.0 : q.scale * 0x1p-40;
        for (std::size_t i = 0; i < v.size(); ++i) {
            worst_excess = std::max(worst_excess, std::fabs(v[i] - back[i]) - half - slack);
        }
    }
    bool constants_exact = true;
    for (double c : {0.0, 0.1, 0.5, -2.75, 3.0}) {
        const std::vector<double> v(64, c);
        constants_exact = constants_exact && dequantize(quantize(v)) == v;
    }
    std::ostringstream detail;
    detail << "worst excess over bound = " << worst_excess
           << " <= 0, constants exact = " << (constants_exact ? "yes" : "no");
    report(3, "quantization round trip", worst_excess <= 0.0 && constants_exact, detail.str());
}

// ---- 4. ablation trend ------------------------------------------------------

double eval_median_kl(const std::vector<CalibrationItem>& items, std::uint32_t bits,
                      std::uint64_t matrix_seed, double tau) {
    std::vector<double> kls;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const CalibrationItem& item = items[i];
        const SketchMatrix m = SketchMatrix::build(rng::derive_seed(matrix_seed, i), bits,
                                                   std::uint32_t(item.q.size()));
        const PackedSketch qs = m.sketch(item.q);
        std::vector<double> exact, sketch;
        exact.reserve(item.keys.size());
        sketch.reserve(item.keys.size());
        for (const auto& k : item.keys) {
            double dot = 0.0;
            for (std::size_t j = 0; j < k.size(); ++j) {
                dot += item.q[j] * k[j];
            }
            exact.push_back(dot / std::sqrt(double(item.q.size())));
            sketch.push_back(hamming_score(qs, m.sketch(k)));
        }
        kls.push_back(kl_between_scaled_softmax(exact, 1.0, sketch, tau));
    }
    std::sort(kls.begin(), kls.end());
    return kls[kls.size() / 2];
}

void check_ablation_trend() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t cal_seed = 3001;
    const std::uint64_t eval_seed = 3002;
    const auto cal_items = generate_calibration_set(64, 64, 64, cal_seed);
    const auto eval_items = generate_calibration_set(200, 64, 64, eval_seed);

    const std::uint32_t widths[] = {64, 128, 256, 512};
    std::vector<double> medians;
    double uncalibrated_256 = 0.0;
    double calibrated_256 = 0.0;
    for (std::uint32_t bits : widths) {
        const CalibrationResult r = calibrate_tau(cal_items, bits, cal_seed);
        const double med = eval_median_kl(eval_items, bits, eval_seed, r.tau_star);
        medians.push_back(med);
        if (bits == 256) {
            calibrated_256 = med;
            uncalibrated_256 = eval_median_kl(eval_items, bits, eval_seed, 1.0);
        }
    }
    bool monotone = true;
    for (std::size_t i = 1; i < medians.size(); ++i) {
        monotone = monotone && medians[i] <= medians[i - 1];
    }
    const bool calibration_helps = uncalibrated_256 >= calibrated_256;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream detail;
    detail << "median KL";
    for (std::size_t i = 0; i < medians.size(); ++i) {
        detail << (i ? " -> " : " ") << medians[i];
    }
    detail << "; tau=1 " << uncalibrated_256 << " >= calibrated " << calibrated_256 << "; "
           << secs << " s";
    report(4, "ablation trend over widths", monotone && calibration_helps && secs < 300.0,
           detail.str());
}

// ---- 5. memory accounting ---------------------------------------------------

std::uint64_t recount_bytes(const H1BCache& cache) {
    const CacheConfig& c = cache.config();
    std::uint64_t total = 0;
    for (std::uint32_t l = 0; l < c.n_layers; ++l) {
        for (std::uint32_t h = 0; h < c.n_heads; ++h) {
            if (c.key_mode == KeyMode::sketch) {
                for (const PackedSketch& s : cache.key_sketches(l, h)) {
                    total += (std::uint64_t(s.width()) + 7) / 8;
                }
            } else {
                for (const auto& k : cache.exact_keys(l, h)) {
                    total += std::uint64_t(k.size()) * c.fp_width;
                }
            }
            if (c.value_mode == ValueMode::int4) {
                for (const QuantizedVector& q : cache.quantized_values(l, h)) {
                    total += std::uint64_t(q.codes.size()) + 5;
                }
            } else {
                for (const auto& v : cache.exact_values(l, h)) {
                    total += std::uint64_t(v.size()) * c.fp_width;
                }
            }
        }
    }
    return total;
}

void check_memory_accounting() {
    std::size_t formula_mismatches = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::uint64_t s = rng::derive_seed(41, trial);
        CacheConfig cfg;
        cfg.n_layers = 1 + std::uint32_t(rng::at(s, 0) % 3);
        cfg.n_heads = 1 + std::uint32_t(rng::at(s, 1) % 3);
        cfg.head_dim = 1 + std::uint32_t(rng::at(s, 2) % 128);
        cfg.sketch_bits = 1 + std::uint32_t(rng::at(s, 3) % 512);
        cfg.key_mode = (rng::at(s, 4) & 1) ? KeyMode::sketch : KeyMode::exact;
        cfg.value_mode = (rng::at(s, 5) & 1) ? ValueMode::int4 : ValueMode::reference;
        cfg.fp_width = (rng::at(s, 6) & 1) ? 2 : 4;
        cfg.master_seed = s;
        H1BCache cache(cfg);
        const std::size_t tokens = rng::at(s, 7) % 6;
        for (std::size_t t = 0; t < tokens; ++t) {
            for (std::uint32_t l = 0; l < cfg.n_layers; ++l) {
                for (std::uint32_t h = 0; h < cfg.n_heads; ++h) {
                    cache.append(l, h, random_vec(rng::derive_seed(s, t, l * 17 + h), cfg.head_dim),
                                 random_vec(rng::derive_seed(s ^ 5, t, l * 17 + h), cfg.head_dim));
                }
            }
        }
        if (cache.byte_size() != recount_bytes(cache)) {
            ++formula_mismatches;
        }
    }

    CacheConfig large;
    large.n_layers = 32;
    large.n_heads = 32;
    large.head_dim = 128;
    large.fp_width = 2;
    large.key_mode = KeyMode::exact;
    large.value_mode = ValueMode::reference;
    const std::uint64_t bytes = std::uint64_t(8192) * large.n_layers * large.n_heads *
                                (large.key_bytes_per_entry() + large.value_bytes_per_entry());
    const double mb = double(bytes) / 1e6;
    const double rel_err = std::fabs(mb - 4300.2) / 4300.2;

    std::ostringstream detail;
    detail << formula_mismatches << "/50 recount mismatches; large reference shape = " << mb
           << " MB vs 4300.2 MB (" << rel_err * 100.0 << "% off, <= 0.2%)";
    report(5, "memory accounting", formula_mismatches == 0 && rel_err <= 0.002, detail.str());
}

// ---- 6. end-to-end fidelity --------------------------------------------------

void check_decode_fidelity() {
    ModelConfig mc;  // defaults: 2 layers, d_model 64, 4 heads, vocab 256
    const std::uint64_t seed = 6001;
    const ModelWeights weights = init_weights(mc, seed);
    const auto prompt = synthetic_corpus(16, mc.vocab_size, rng::derive_seed(seed, 1));
    const std::uint32_t steps = 64;

    CacheConfig reference;
    reference.key_mode = KeyMode::exact;
    reference.value_mode = ValueMode::reference;
    reference.master_seed = seed;

    CacheConfig hybrid;
    hybrid.key_mode = KeyMode::sketch;
    hybrid.value_mode = ValueMode::int4;
    hybrid.sketch_bits = 512;
    hybrid.master_seed = seed;

    // reference greedy continuation feeds the calibration set
    Decoder ref_run(weights, reference, 1.0);
    std::vector<int> stream(prompt.begin(), prompt.end());
    std::vector<double> logits;
    for (int t : prompt) {
        logits = ref_run.step_logits(t);
    }
    for (std::uint32_t s = 0; s + 1 < steps; ++s) {
        const int next = int(argmax_index(logits));
        stream.push_back(next);
        logits = ref_run.step_logits(next);
    }
    const auto items = collect_calibration_items(weights, stream, seed);
    const CalibrationResult cal = calibrate_tau(items, hybrid.sketch_bits, seed);

    const FidelityReport self = decode_compare(weights, prompt, steps, reference, reference, 1.0);
    bool self_exact = self.top1_agreement == 1.0;
    for (double kl : self.step_kl) {
        self_exact = self_exact && kl == 0.0;
    }

    const FidelityReport rep =
        decode_compare(weights, prompt, steps, reference, hybrid, cal.tau_star);

    std::ostringstream detail;
    detail << "top-1 agreement " << rep.top1_agreement * 100.0 << "% >= 90%, tau* = "
           << cal.tau_star << ", self-compare exact = " << (self_exact ? "yes" : "no");
    report(6, "end-to-end decode fidelity", rep.top1_agreement >= 0.90 && self_exact,
           detail.str());
}

// ---- 7. performance smoke ------------------------------------------------------

void check_performance() {
    const std::uint64_t n = 8192;
    const std::uint32_t dim = 64;
    const std::uint64_t seed = 7001;

    std::vector<std::vector<double>> keys(n);
    for (std::uint64_t t = 0; t < n; ++t) {
        keys[t] = random_vec(rng::derive_seed(seed, t), dim);
    }
    const auto q = random_vec(rng::derive_seed(seed, n + 1), dim);
    const std::vector<double> zero(dim, 0.0);

    CacheConfig float_cfg;
    float_cfg.head_dim = dim;
    float_cfg.key_mode = KeyMode::exact;
    CacheConfig sketch_cfg = float_cfg;
    sketch_cfg.key_mode = KeyMode::sketch;
    sketch_cfg.sketch_bits = 256;
    sketch_cfg.master_seed = seed;

    H1BCache float_cache(float_cfg);
    H1BCache sketch_cache(sketch_cfg);
    for (std::uint64_t t = 0; t < n; ++t) {
        float_cache.append(0, 0, keys[t], zero);
        sketch_cache.append(0, 0, keys[t], zero);
    }

    double sink = 0.0;
    auto time_mode = [&](const H1BCache& cache) {
        const AttentionConfig acfg = AttentionConfig::for_cache(cache, 1.0);
        return time_ns(3, 15, [&] {
            const auto logits = score_context(q, cache, 0, 0, acfg);
            sink += logits[0] + logits[n - 1];
        });
    };
    const TimingStats float_stats = time_mode(float_cache);
    const TimingStats sketch_stats = time_mode(sketch_cache);

    const std::uint64_t float_bytes = float_cfg.key_bytes_per_entry();
    const std::uint64_t sketch_bytes = sketch_cfg.key_bytes_per_entry();
    const bool bytes_ok = float_bytes == 128 && sketch_bytes == 32;
    const bool latency_ok = sketch_stats.median_ns <= float_stats.median_ns;

    std::ostringstream detail;
    detail << "bitwise " << sketch_stats.median_ns / double(n) << " ns/token <= float "
           << float_stats.median_ns / double(n) << " ns/token; key bytes " << sketch_bytes
           << " vs " << float_bytes << " (" << double(float_bytes) / double(sketch_bytes)
           << "x, >= 4x)" << (sink == 1e300 ? "!" : "");
    report(7, "bitwise scoring wins", bytes_ok && latency_ok, detail.str());
}

// ---- 8. determinism ---------------------------------------------------------------

json strip_timings(json j) {
    j.erase("timings");
    if (j.contains("results") && j["results"].contains("rows")) {
        for (auto& row : j["results"]["rows"]) {
            for (auto it = row.begin(); it != row.end();) {
                if (it.key().find("_ns") != std::string::npos) {
                    it = row.erase(it);
                } else {
                    ++it;
                }
            }
        }
    }
    return j;
}

void check_determinism() {
    const std::vector<std::vector<std::string>> cases = {
        {"validate-sketch", "--b", "128", "--trials", "2000", "--seed", "8001"},
        {"quantcheck", "--trials", "300", "--d", "64", "--seed", "8001"},
        {"memory", "--layers", "4", "--heads", "4", "--context", "1024", "--seed", "8001"},
        {"calibrate", "--contexts", "16", "--tokens", "24", "--d", "32", "--b", "128", "--seed",
         "8001"},
        {"decode", "--config-b", "h1bkv", "--b", "128", "--steps", "8", "--prompt-len", "6",
         "--seed", "8001"},
        {"bench", "--context", "256", "--repeats", "3", "--warmup", "1", "--seed", "8001"},
    };
    std::size_t stable = 0;
    for (const auto& args : cases) {
        auto once = [&] {
            std::ostringstream out, err;
            cli::run_cli(args, out, err);
            return strip_timings(json::parse(out.str()));
        };
        if (once() == once()) {
            ++stable;
        }
    }
    std::ostringstream detail;
    detail << stable << "/" << cases.size() << " commands byte-identical across two runs";
    report(8, "seeded command determinism", stable == cases.size(), detail.str());
}

}  // namespace

int main() {
    check_lsh_expectation();
    check_kernel_equivalence();
    check_quant_bound();
    check_ablation_trend();
    check_memory_accounting();
    check_decode_fidelity();
    check_performance();
    check_determinism();
    if (g_failures == 0) {
        std::printf("all acceptance checks passed\n");
    } else {
        std::printf("%d acceptance check(s) failed\n", g_failures);
    }
    return g_failures == 0 ? 0 : 1;
}
