// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "h1bkv/report.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace h1bkv::cli {

// Exit codes: 0 success / within tolerance, 1 runtime failure or tolerance
// exceeded, 2 usage error.
constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct GlobalOpts {
    std::uint64_t seed = 42;
    std::string output = "json";  // json | csv
    double tol = 0.01;
};

struct ValidateSketchOpts {
    std::uint32_t bits = 256;
    std::uint32_t trials = 10000;
    std::vector<double> cosines = {-0.9, -0.5, 0.0, 0.5, 0.9};
};

struct QuantCheckOpts {
    std::uint32_t trials = 1000;
    std::uint32_t dim = 64;
    double lo = -3.0;
    double hi = 3.0;
};

struct MemoryOpts {
    std::uint32_t layers = 32;
    std::uint32_t heads = 32;
    std::uint32_t head_dim = 128;
    std::uint64_t context = 8192;
    std::uint32_t bits = 256;
    std::uint32_t fp_width = 2;
    std::string key_mode = "sketch";
    std::string value_mode = "int4";
};

struct CalibrateOpts {
    std::string in_path;   // load items from file when set
    std::string out_path;  // write generated items when set
    bool generate = false;
    std::uint32_t contexts = 64;
    std::uint32_t tokens = 64;
    std::uint32_t dim = 64;
    std::uint32_t bits = 256;
    double tau_lo = 1e-3;
    double tau_hi = 1e3;
};

struct DecodeOpts {
    std::string config_a = "reference";  // reference | 1bitkey | h1bkv
    std::string config_b = "h1bkv";
    std::uint32_t bits = 256;
    double tau = 1.0;
    bool calibrate = false;  // calibrate tau on the model's own attention
    std::uint32_t steps = 32;
    std::uint32_t prompt_len = 16;
    std::string in_path;  // byte corpus used as prompt instead
    std::uint32_t layers = 2;
    std::uint32_t d_model = 64;
    std::uint32_t heads = 4;
    std::uint32_t vocab = 256;
    std::uint32_t max_context = 256;
    std::uint64_t weight_seed = 1;
};

struct BenchOpts {
    std::vector<std::uint64_t> contexts = {1024, 8192};
    std::uint32_t dim = 64;
    std::uint32_t bits = 256;
    std::uint32_t repeats = 30;
    std::uint32_t warmup = 3;
    std::uint32_t fp_width = 2;
    std::uint32_t threads = 1;  // benchmarks pin to one thread by default
};

int cmd_validate_sketch(const GlobalOpts& g, const ValidateSketchOpts& o, std::ostream& out);
int cmd_quantcheck(const GlobalOpts& g, const QuantCheckOpts& o, std::ostream& out);
int cmd_memory(const GlobalOpts& g, const MemoryOpts& o, std::ostream& out);
int cmd_calibrate(const GlobalOpts& g, const CalibrateOpts& o, std::ostream& out);
int cmd_decode(const GlobalOpts& g, const DecodeOpts& o, std::ostream& out);
int cmd_bench(const GlobalOpts& g, const BenchOpts& o, std::ostream& out);

// Parses argv-style args (program name excluded) and dispatches. Catches
// command failures and maps them onto the exit-code contract.
int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace h1bkv::cli
