// SPDX-License-Identifier: Apache-2.0
#include "h1bkv/cli.hpp"

#include "h1bkv/attention.hpp"
#include "h1bkv/cache.hpp"
#include "h1bkv/quant.hpp"
#include "h1bkv/reference.hpp"
#include "h1bkv/rng.hpp"
#include "h1bkv/sketch.hpp"
#include "h1bkv/toymodel.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

namespace h1bkv::cli {

namespace {

using nlohmann::json;

// Shortest round-trip decimal form, same as the JSON encoding.
std::string num(double v) {
    return json(v).dump();
}

double wall_ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

void emit_json(std::ostream& out, const RunReport& report) {
    out << report.to_json().dump(2) << "\n";
}

CacheConfig cache_preset(const std::string& name, std::uint32_t bits, std::uint64_t master_seed) {
    CacheConfig c;
    c.sketch_bits = bits;
    c.master_seed = master_seed;
    if (name == "reference") {
        c.key_mode = KeyMode::exact;
        c.value_mode = ValueMode::reference;
    } else if (name == "1bitkey") {
        c.key_mode = KeyMode::sketch;
        c.value_mode = ValueMode::reference;
    } else if (name == "h1bkv") {
        c.key_mode = KeyMode::sketch;
        c.value_mode = ValueMode::int4;
    } else {
        throw std::invalid_argument("unknown cache preset: " + name);
    }
    return c;
}

}  // namespace

int cmd_validate_sketch(const GlobalOpts& g, const ValidateSketchOpts& o, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto curve = estimate_similarity_curve(o.bits, o.cosines, o.trials, g.seed);
    double max_err = 0.0;
    json rows = json::array();
    for (const CurvePoint& p : curve) {
        const double err = std::fabs(p.empirical - p.theoretical);
        max_err = std::max(max_err, err);
        rows.push_back({{"cos", p.cosine},
                        {"empirical", p.empirical},
                        {"theoretical", p.theoretical},
                        {"abs_err", err}});
    }
    const bool ok = max_err <= g.tol;

    RunReport report;
    report.command = "validate-sketch";
    report.seed = g.seed;
    report.config = {{"b", o.bits}, {"trials", o.trials}, {"tol", g.tol}, {"cos", o.cosines}};
    report.results = {{"rows", rows}, {"max_abs_err", max_err}, {"pass", ok}};
    report.timings = {{"wall_ms", wall_ms_since(t0)}};
    if (g.output == "csv") {
        out << "cos,empirical,theoretical,abs_err\n";
        for (const CurvePoint& p : curve) {
            out << csv_line({num(p.cosine), num(p.empirical), num(p.theoretical),
                             num(std::fabs(p.empirical - p.theoretical))})
                << "\n";
        }
    } else {
        emit_json(out, report);
    }
    return ok ? kExitOk : kExitFailure;
}

int cmd_quantcheck(const GlobalOpts& g, const QuantCheckOpts& o, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!(o.hi > o.lo)) {
        throw std::invalid_argument("quantcheck: empty value range");
    }
    double max_abs_err = 0.0;
    double worst_excess = -std::numeric_limits<double>::infinity();
    double max_step = 0.0;
    for (std::uint32_t trial = 0; trial < o.trials; ++trial) {
        const std::uint64_t s = rng::derive_seed(g.seed, trial);
        std::vector<double> v(o.dim);
        for (std::uint32_t i = 0; i < o.dim; ++i) {
            v[i] = o.lo + (o.hi - o.lo) * rng::uniform01(s, i);
        }
        const QuantizedVector q = quantize(v);
        const std::vector<double> back = dequantize(q);
        const double half = q.degenerate ? 0.0 : q.scale / 2.0;
        // bound is half a step plus an ulp-scale slack on the step
        const double slack = q.degenerate ? 0.0 : q.scale * 0x1p-40;
        max_step = std::max(max_step, q.degenerate ? 0.0 : q.scale);
        for (std::uint32_t i = 0; i < o.dim; ++i) {
            const double err = std::fabs(v[i] - back[i]);
            max_abs_err = std::max(max_abs_err, err);
            worst_excess = std::max(worst_excess, err - half - slack);
        }
    }
    const bool ok = worst_excess <= 0.0;

    RunReport report;
    report.command = "quantcheck";
    report.seed = g.seed;
    report.config = {{"trials", o.trials}, {"d", o.dim}, {"lo", o.lo}, {"hi", o.hi}};
    report.results = {{"max_abs_err", max_abs_err},
                      {"max_step", max_step},
                      {"worst_excess_over_bound", worst_excess},
                      {"pass", ok}};
    report.timings = {{"wall_ms", wall_ms_since(t0)}};
    if (g.output == "csv") {
        out << "trials,d,max_abs_err,worst_excess,pass\n";
        out << csv_line({std::to_string(o.trials), std::to_string(o.dim), num(max_abs_err),
                         num(worst_excess), ok ? "1" : "0"})
            << "\n";
    } else {
        emit_json(out, report);
    }
    return ok ? kExitOk : kExitFailure;
}

int cmd_memory(const GlobalOpts& g, const MemoryOpts& o, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    CacheConfig requested;
    requested.n_layers = o.layers;
    requested.n_heads = o.heads;
    requested.head_dim = o.head_dim;
    requested.sketch_bits = o.bits;
    requested.fp_width = o.fp_width;
    requested.key_mode = key_mode_from_string(o.key_mode);
    requested.value_mode = value_mode_from_string(o.value_mode);
    requested.master_seed = g.seed;

    CacheConfig baseline = requested;
    baseline.key_mode = KeyMode::exact;
    baseline.value_mode = ValueMode::reference;

    const CompressionReport rep = compression_report(baseline, requested, o.context);
    auto component_json = [](const ComponentBytes& c) {
        return json{{"key_bytes_per_entry", c.key_bytes_per_entry},
                    {"value_bytes_per_entry", c.value_bytes_per_entry},
                    {"key_total", c.key_total},
                    {"value_total", c.value_total},
                    {"total", c.total},
                    {"mb", double(c.total) / 1e6}};
    };

    RunReport report;
    report.command = "memory";
    report.seed = g.seed;
    report.config = {{"layers", o.layers},        {"heads", o.heads},
                     {"head_dim", o.head_dim},    {"context", o.context},
                     {"b", o.bits},               {"fp_width", o.fp_width},
                     {"key_mode", o.key_mode},    {"value_mode", o.value_mode}};
    report.results = {{"baseline", component_json(rep.a)},
                      {"requested", component_json(rep.b)},
                      {"ratio", rep.ratio},
                      {"key_ratio", rep.key_ratio},
                      {"value_ratio", rep.value_ratio},
                      {"tokens", rep.tokens}};
    report.timings = {{"wall_ms", wall_ms_since(t0)}};
    if (g.output == "csv") {
        out << "label,tokens,key_bytes_per_entry,value_bytes_per_entry,total_bytes,mb,"
               "ratio_vs_baseline\n";
        auto row = [&](const char* label, const ComponentBytes& c, double ratio) {
            out << csv_line({label, std::to_string(rep.tokens),
                             std::to_string(c.key_bytes_per_entry),
                             std::to_string(c.value_bytes_per_entry), std::to_string(c.total),
                             num(double(c.total) / 1e6), num(ratio)})
                << "\n";
        };
        row("baseline", rep.a, 1.0);
        row("requested", rep.b, rep.ratio);
    } else {
        emit_json(out, report);
    }
    return kExitOk;
}

int cmd_calibrate(const GlobalOpts& g, const CalibrateOpts& o, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<CalibrationItem> items;
    if (!o.in_path.empty()) {
        items = load_calibration_set(o.in_path);
    } else {
        items = generate_calibration_set(o.contexts, o.tokens, o.dim, g.seed);
        if (!o.out_path.empty()) {
            save_calibration_set(o.out_path, items);
        }
    }
    const CalibrationResult r = calibrate_tau(items, o.bits, g.seed, o.tau_lo, o.tau_hi);

    RunReport report;
    report.command = "calibrate";
    report.seed = g.seed;
    report.config = {{"in", o.in_path},   {"out", o.out_path}, {"contexts", o.contexts},
                     {"tokens", o.tokens}, {"d", o.dim},        {"b", o.bits},
                     {"tau_lo", o.tau_lo}, {"tau_hi", o.tau_hi}};
    report.results = {{"tau_star", r.tau_star},
                      {"kl_at_one", r.kl_at_one},
                      {"kl_at_tau_star", r.kl_at_tau_star},
                      {"evaluations", r.evaluations},
                      {"items", items.size()}};
    report.timings = {{"wall_ms", wall_ms_since(t0)}};
    if (g.output == "csv") {
        out << "tau_star,kl_at_one,kl_at_tau_star,evaluations,items\n";
        out << csv_line({num(r.tau_star), num(r.kl_at_one), num(r.kl_at_tau_star),
                         std::to_string(r.evaluations), std::to_string(items.size())})
            << "\n";
    } else {
        emit_json(out, report);
    }
    return kExitOk;
}

int cmd_decode(const GlobalOpts& g, const DecodeOpts& o, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
    ModelConfig mc;
    mc.n_layers = o.layers;
    mc.d_model = o.d_model;
    mc.n_heads = o.heads;
    mc.vocab_size = o.vocab;
    mc.max_context = o.max_context;
    const ModelWeights weights = init_weights(mc, o.weight_seed);

    std::vector<int> prompt;
    if (!o.in_path.empty()) {
        std::ifstream is(o.in_path, std::ios::binary);
        if (!is) {
            throw std::runtime_error("cannot open corpus: " + o.in_path);
        }
        char c;
        while (is.get(c) && prompt.size() < o.max_context) {
            const int token = int(static_cast<unsigned char>(c));
            if (std::uint32_t(token) >= o.vocab) {
                throw std::runtime_error("corpus byte out of vocabulary range");
            }
            prompt.push_back(token);
        }
        if (prompt.empty()) {
            throw std::runtime_error("corpus is empty: " + o.in_path);
        }
    } else {
        prompt = synthetic_corpus(o.prompt_len, o.vocab, rng::derive_seed(g.seed, 7));
    }

    const CacheConfig cfg_a = cache_preset(o.config_a, o.bits, g.seed);
    const CacheConfig cfg_b = cache_preset(o.config_b, o.bits, g.seed);

    double tau = o.tau;
    json calibration = nullptr;
    const bool any_sketch =
        cfg_a.key_mode == KeyMode::sketch || cfg_b.key_mode == KeyMode::sketch;
    if (o.calibrate && any_sketch) {
        // Calibrate on the model's own attention along the reference
        // greedy continuation of the prompt.
        CacheConfig ref_cfg = cache_preset("reference", o.bits, g.seed);
        Decoder ref_run(weights, ref_cfg, 1.0);
        std::vector<int> stream(prompt.begin(), prompt.end());
        std::vector<double> logits;
        for (int t : prompt) {
            logits = ref_run.step_logits(t);
        }
        for (std::uint32_t s = 0; s + 1 < o.steps; ++s) {
            const int next = int(argmax_index(logits));
            stream.push_back(next);
            logits = ref_run.step_logits(next);
        }
        const auto items = collect_calibration_items(weights, stream, g.seed);
        const CalibrationResult r = calibrate_tau(items, o.bits, g.seed);
        tau = r.tau_star;
        calibration = {{"tau_star", r.tau_star},
                       {"kl_at_one", r.kl_at_one},
                       {"kl_at_tau_star", r.kl_at_tau_star},
                       {"items", items.size()}};
    }

    const FidelityReport rep = decode_compare(weights, prompt, o.steps, cfg_a, cfg_b, tau);

    RunReport report;
    report.command = "decode";
    report.seed = g.seed;
    report.config = {{"config_a", o.config_a}, {"config_b", o.config_b},
                     {"b", o.bits},            {"tau", tau},
                     {"calibrate", o.calibrate}, {"steps", o.steps},
                     {"prompt_len", prompt.size()}, {"layers", o.layers},
                     {"d_model", o.d_model},   {"heads", o.heads},
                     {"vocab", o.vocab},       {"weight_seed", o.weight_seed}};
    report.results = {{"mean_kl", rep.mean_kl},
                      {"median_kl", rep.median_kl},
                      {"top1_agreement", rep.top1_agreement},
                      {"bytes_a", rep.bytes_a},
                      {"bytes_b", rep.bytes_b},
                      {"step_kl", rep.step_kl},
                      {"calibration", calibration}};
    report.timings = {{"wall_ms", wall_ms_since(t0)}};
    if (g.output == "csv") {
        out << "step,kl,agree\n";
        for (std::size_t s = 0; s < rep.step_kl.size(); ++s) {
            out << csv_line({std::to_string(s), num(rep.step_kl[s]),
                             rep.tokens_a[s] == rep.tokens_b[s] ? "1" : "0"})
                << "\n";
        }
    } else {
        emit_json(out, report);
    }
    return kExitOk;
}

int cmd_bench(const GlobalOpts& g, const BenchOpts& o, std::ostream& out) {
    const auto t0 = std::chrono::steady_clock::now();
#ifdef _OPENMP
    const int prev_threads = omp_get_max_threads();
    omp_set_num_threads(int(o.threads));
#endif
    json rows = json::array();
    std::vector<std::string> csv_rows;
    for (std::size_t ci = 0; ci < o.contexts.size(); ++ci) {
        const std::uint64_t n = o.contexts[ci];
        const std::uint64_t data_seed = rng::derive_seed(g.seed, ci);
        std::vector<std::vector<double>> keys(n, std::vector<double>(o.dim));
        for (std::uint64_t t = 0; t < n; ++t) {
            for (std::uint32_t j = 0; j < o.dim; ++j) {
                keys[t][j] = rng::gaussian(data_seed, t * o.dim + j);
            }
        }
        std::vector<double> q(o.dim);
        for (std::uint32_t j = 0; j < o.dim; ++j) {
            q[j] = rng::gaussian(rng::derive_seed(g.seed, ci, 1), j);
        }
        const std::vector<double> zero_value(o.dim, 0.0);

        CacheConfig float_cfg;
        float_cfg.head_dim = o.dim;
        float_cfg.fp_width = o.fp_width;
        float_cfg.key_mode = KeyMode::exact;
        CacheConfig sketch_cfg = float_cfg;
        sketch_cfg.key_mode = KeyMode::sketch;
        sketch_cfg.sketch_bits = o.bits;
        sketch_cfg.master_seed = g.seed;

        H1BCache float_cache(float_cfg);
        H1BCache sketch_cache(sketch_cfg);
        for (std::uint64_t t = 0; t < n; ++t) {
            float_cache.append(0, 0, keys[t], zero_value);
            sketch_cache.append(0, 0, keys[t], zero_value);
        }

        auto run_mode = [&](const char* mode, const H1BCache& cache) {
            const AttentionConfig acfg = AttentionConfig::for_cache(cache, 1.0);
            double checksum = 0.0;
            const TimingStats stats = time_ns(o.warmup, o.repeats, [&] {
                const std::vector<double> logits = score_context(q, cache, 0, 0, acfg);
                for (double v : logits) {
                    checksum += v;
                }
            });
            const std::uint64_t bytes = cache.config().key_bytes_per_entry();
            const double per_token_ns = stats.median_ns / double(n);
            rows.push_back({{"context", n},
                            {"mode", mode},
                            {"median_ns", per_token_ns},
                            {"bytes", bytes},
                            {"mean_ns", stats.mean_ns / double(n)},
                            {"stddev_ns", stats.stddev_ns / double(n)},
                            {"checksum", checksum}});
            csv_rows.push_back(csv_line(
                {std::to_string(n), mode, num(per_token_ns), std::to_string(bytes)}));
        };
        run_mode("float", float_cache);
        run_mode("bitwise", sketch_cache);
    }
#ifdef _OPENMP
    omp_set_num_threads(prev_threads);
#endif

    RunReport report;
    report.command = "bench";
    report.seed = g.seed;
    report.config = {{"contexts", o.contexts}, {"d", o.dim},
                     {"b", o.bits},            {"repeats", o.repeats},
                     {"warmup", o.warmup},     {"fp_width", o.fp_width},
                     {"threads", o.threads}};
    report.results = {{"rows", rows}};
    report.timings = {{"wall_ms", wall_ms_since(t0)}};
    if (g.output == "csv") {
        out << "context,mode,median_ns,bytes\n";
        for (const std::string& row : csv_rows) {
            out << row << "\n";
        }
    } else {
        emit_json(out, report);
    }
    return kExitOk;
}

int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"hybrid one-bit KV cache toolkit"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--seed", g.seed, "master seed recorded in every report");
    app.add_option("--output", g.output, "output format")
        ->check(CLI::IsMember({"json", "csv"}));
    app.add_option("--tol", g.tol, "tolerance for validation commands")
        ->check(CLI::PositiveNumber);

    ValidateSketchOpts vs;
    CLI::App* vs_cmd =
        app.add_subcommand("validate-sketch", "Monte-Carlo check of sketch score expectation");
    vs_cmd->add_option("--b", vs.bits, "sketch width in bits")->check(CLI::PositiveNumber);
    vs_cmd->add_option("--trials", vs.trials, "Monte-Carlo trials per cosine")
        ->check(CLI::PositiveNumber);
    vs_cmd->add_option("--cos", vs.cosines, "target cosines in (-1, 1)");
    vs_cmd->fallthrough();

    QuantCheckOpts qc;
    CLI::App* qc_cmd = app.add_subcommand("quantcheck", "round-trip bound check on random vectors");
    qc_cmd->add_option("--trials", qc.trials)->check(CLI::PositiveNumber);
    qc_cmd->add_option("--d", qc.dim)->check(CLI::PositiveNumber);
    qc_cmd->add_option("--lo", qc.lo);
    qc_cmd->add_option("--hi", qc.hi);
    qc_cmd->fallthrough();

    MemoryOpts mem;
    CLI::App* mem_cmd = app.add_subcommand("memory", "cache byte accounting and compression ratio");
    mem_cmd->add_option("--layers", mem.layers)->check(CLI::PositiveNumber);
    mem_cmd->add_option("--heads", mem.heads)->check(CLI::PositiveNumber);
    mem_cmd->add_option("--head-dim", mem.head_dim)->check(CLI::PositiveNumber);
    mem_cmd->add_option("--context", mem.context);
    mem_cmd->add_option("--b", mem.bits)->check(CLI::PositiveNumber);
    mem_cmd->add_option("--fp-width", mem.fp_width)->check(CLI::PositiveNumber);
    mem_cmd->add_option("--key-mode", mem.key_mode)->check(CLI::IsMember({"exact", "sketch"}));
    mem_cmd->add_option("--value-mode", mem.value_mode)
        ->check(CLI::IsMember({"reference", "int4"}));
    mem_cmd->fallthrough();

    CalibrateOpts cal;
    CLI::App* cal_cmd = app.add_subcommand("calibrate", "fit the softmax temperature");
    cal_cmd->add_option("--in", cal.in_path, "calibration set file");
    cal_cmd->add_option("--out", cal.out_path, "write the generated set here");
    cal_cmd->add_flag("--gen", cal.generate, "generate a synthetic set (default when no --in)");
    cal_cmd->add_option("--contexts", cal.contexts)->check(CLI::PositiveNumber);
    cal_cmd->add_option("--tokens", cal.tokens)->check(CLI::PositiveNumber);
    cal_cmd->add_option("--d", cal.dim)->check(CLI::PositiveNumber);
    cal_cmd->add_option("--b", cal.bits)->check(CLI::PositiveNumber);
    cal_cmd->add_option("--tau-lo", cal.tau_lo)->check(CLI::PositiveNumber);
    cal_cmd->add_option("--tau-hi", cal.tau_hi)->check(CLI::PositiveNumber);
    cal_cmd->fallthrough();

    DecodeOpts dec;
    CLI::App* dec_cmd = app.add_subcommand("decode", "compare greedy decodes across cache configs");
    dec_cmd->add_option("--config-a", dec.config_a)
        ->check(CLI::IsMember({"reference", "1bitkey", "h1bkv"}));
    dec_cmd->add_option("--config-b", dec.config_b)
        ->check(CLI::IsMember({"reference", "1bitkey", "h1bkv"}));
    dec_cmd->add_option("--b", dec.bits)->check(CLI::PositiveNumber);
    dec_cmd->add_option("--tau", dec.tau)->check(CLI::PositiveNumber);
    dec_cmd->add_flag("--calibrate", dec.calibrate);
    dec_cmd->add_option("--steps", dec.steps)->check(CLI::PositiveNumber);
    dec_cmd->add_option("--prompt-len", dec.prompt_len)->check(CLI::PositiveNumber);
    dec_cmd->add_option("--in", dec.in_path, "byte corpus used as the prompt");
    dec_cmd->add_option("--layers", dec.layers)->check(CLI::PositiveNumber);
    dec_cmd->add_option("--d-model", dec.d_model)->check(CLI::PositiveNumber);
    dec_cmd->add_option("--heads", dec.heads)->check(CLI::PositiveNumber);
    dec_cmd->add_option("--vocab", dec.vocab)->check(CLI::PositiveNumber);
    dec_cmd->add_option("--max-context", dec.max_context)->check(CLI::PositiveNumber);
    dec_cmd->add_option("--weight-seed", dec.weight_seed);
    dec_cmd->fallthrough();

    BenchOpts bench;
    CLI::App* bench_cmd =
        app.add_subcommand("bench", "score_context latency, float vs bitwise paths");
    bench_cmd->add_option("--context", bench.contexts, "context lengths to time");
    bench_cmd->add_option("--d", bench.dim)->check(CLI::PositiveNumber);
    bench_cmd->add_option("--b", bench.bits)->check(CLI::PositiveNumber);
    bench_cmd->add_option("--repeats", bench.repeats)->check(CLI::PositiveNumber);
    bench_cmd->add_option("--warmup", bench.warmup);
    bench_cmd->add_option("--fp-width", bench.fp_width)->check(CLI::PositiveNumber);
    bench_cmd->add_option("--threads", bench.threads)->check(CLI::PositiveNumber);
    bench_cmd->fallthrough();

    try {
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*vs_cmd) return cmd_validate_sketch(g, vs, out);
        if (*qc_cmd) return cmd_quantcheck(g, qc, out);
        if (*mem_cmd) return cmd_memory(g, mem, out);
        if (*cal_cmd) return cmd_calibrate(g, cal, out);
        if (*dec_cmd) return cmd_decode(g, dec, out);
        if (*bench_cmd) return cmd_bench(g, bench, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    err << "error: no command\n";
    return kExitUsage;
}

}  // namespace h1bkv::cli
