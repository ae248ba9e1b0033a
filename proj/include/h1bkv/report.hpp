// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace h1bkv {

/// Machine-readable result of one CLI command. Serializes as
/// {command, seed, config, results, timings}; every numeric field must be
/// finite and the seed is always recorded.
struct RunReport {
    std::string command;
    std::uint64_t seed = 0;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json results = nlohmann::json::object();
    nlohmann::json timings = nlohmann::json::object();

    nlohmann::json to_json() const;  // throws if any number is non-finite
};

bool all_numbers_finite(const nlohmann::json& j);

struct TimingStats {
    double median_ns = 0.0;
    double mean_ns = 0.0;
    double stddev_ns = 0.0;
    double min_ns = 0.0;
    double max_ns = 0.0;
    std::uint32_t warmup = 0;
    std::uint32_t repeats = 0;
};

// Runs fn `warmup` times unmeasured, then `repeats` times measured.
TimingStats time_ns(std::uint32_t warmup, std::uint32_t repeats,
                    const std::function<void()>& fn);

// Minimal CSV escaping: quotes fields containing separators.
std::string csv_line(const std::vector<std::string>& fields);

}  // namespace h1bkv
