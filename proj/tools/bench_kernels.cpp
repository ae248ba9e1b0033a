// SPDX-License-Identifier: Apache-2.0
// Compares the OpenMP scoring kernels against the serial reference
// implementations. CSV on stdout: kernel,impl,threads,context,ns_per_token.

#include "h1bkv/attention.hpp"
#include "h1bkv/cache.hpp"
#include "h1bkv/reference.hpp"
#include "h1bkv/report.hpp"
#include "h1bkv/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

using namespace h1bkv;

namespace {

struct Args {
    std::vector<std::uint64_t> contexts = {1024, 8192};
    std::uint32_t dim = 64;
    std::uint32_t bits = 256;
    std::uint32_t repeats = 15;
    std::uint32_t warmup = 3;
    std::uint64_t seed = 42;
};

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
    omp_set_num_threads(n);
#else
    (void)n;
#endif
}

}  // namespace

int main(int argc, char** argv) {
    Args a;
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string flag = argv[i];
        const std::string value = argv[i + 1];
        if (flag == "--d") {
            a.dim = std::uint32_t(std::stoul(value));
        } else if (flag == "--b") {
            a.bits = std::uint32_t(std::stoul(value));
        } else if (flag == "--repeats") {
            a.repeats = std::uint32_t(std::stoul(value));
        } else if (flag == "--seed") {
            a.seed = std::stoull(value);
        } else if (flag == "--context") {
            a.contexts = {std::stoull(value)};
        } else {
            std::cerr << "unknown flag: " << flag << "\n";
            return 2;
        }
    }

    const int hw_threads = max_threads();
    std::cout << "kernel,impl,threads,context,ns_per_token\n";
    double sink = 0.0;

    for (std::uint64_t n : a.contexts) {
        std::vector<std::vector<double>> keys(n, std::vector<double>(a.dim));
        const std::uint64_t ds = rng::derive_seed(a.seed, n);
        for (std::uint64_t t = 0; t < n; ++t) {
            for (std::uint32_t j = 0; j < a.dim; ++j) {
                keys[t][j] = rng::gaussian(ds, t * a.dim + j);
            }
        }
        std::vector<double> q(a.dim);
        for (std::uint32_t j = 0; j < a.dim; ++j) {
            q[j] = rng::gaussian(rng::derive_seed(a.seed, n, 1), j);
        }
        const std::vector<double> zero(a.dim, 0.0);

        CacheConfig cfg;
        cfg.head_dim = a.dim;
        cfg.sketch_bits = a.bits;
        cfg.key_mode = KeyMode::sketch;
        cfg.master_seed = a.seed;
        H1BCache cache(cfg);
        for (std::uint64_t t = 0; t < n; ++t) {
            cache.append(0, 0, keys[t], zero);
        }
        const AttentionConfig acfg = AttentionConfig::for_cache(cache, 1.0);

        // serial reference: unpacked ±1 dot products
        const auto qs_ref = ref::sign_sketch(cache.matrix(0, 0), q);
        std::vector<std::vector<std::int8_t>> key_refs(n);
        for (std::uint64_t t = 0; t < n; ++t) {
            key_refs[t] = ref::sign_sketch(cache.matrix(0, 0), keys[t]);
        }
        const TimingStats ref_stats = time_ns(a.warmup, a.repeats, [&] {
            for (std::uint64_t t = 0; t < n; ++t) {
                sink += ref::pm1_score(qs_ref, key_refs[t]);
            }
        });
        std::cout << csv_line({"score_sketch", "ref_serial", "1", std::to_string(n),
                               std::to_string(ref_stats.median_ns / double(n))})
                  << "\n";

        for (int threads : {1, hw_threads}) {
            set_threads(threads);
            const TimingStats stats = time_ns(a.warmup, a.repeats, [&] {
                const auto logits = score_context(q, cache, 0, 0, acfg);
                sink += logits[0];
            });
            std::cout << csv_line({"score_sketch", "packed_omp", std::to_string(threads),
                                   std::to_string(n),
                                   std::to_string(stats.median_ns / double(n))})
                      << "\n";
            if (threads == hw_threads) break;  // avoid a duplicate row on 1-core hosts
        }
        set_threads(hw_threads);
    }

    if (sink == 12345.6789) {
        std::cerr << "sink\n";  // keeps the accumulator observable
    }
    return 0;
}
