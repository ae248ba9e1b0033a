// SPDX-License-Identifier: Apache-2.0
#include "h1bkv/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace h1bkv {

bool all_numbers_finite(const nlohmann::json& j) {
    if (j.is_number_float()) {
        return std::isfinite(j.get<double>());
    }
    if (j.is_object() || j.is_array()) {
        return std::all_of(j.begin(), j.end(), [](const auto& v) { return all_numbers_finite(v); });
    }
    return true;
}

nlohmann::json RunReport::to_json() const {
    nlohmann::json j{{"command", command},
                     {"seed", seed},
                     {"config", config},
                     {"results", results},
                     {"timings", timings}};
    if (!all_numbers_finite(j)) {
        throw std::logic_error("RunReport: non-finite numeric field in " + command);
    }
    return j;
}

TimingStats time_ns(std::uint32_t warmup, std::uint32_t repeats,
                    const std::function<void()>& fn) {
    using clock = std::chrono::steady_clock;
    if (repeats == 0) {
        throw std::invalid_argument("time_ns: repeats must be >= 1");
    }
    for (std::uint32_t i = 0; i < warmup; ++i) {
        fn();
    }
    std::vector<double> samples(repeats);
    for (std::uint32_t i = 0; i < repeats; ++i) {
        const auto t0 = clock::now();
        fn();
        const auto t1 = clock::now();
        samples[i] = double(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
    }
    std::sort(samples.begin(), samples.end());
    TimingStats s;
    s.warmup = warmup;
    s.repeats = repeats;
    s.min_ns = samples.front();
    s.max_ns = samples.back();
    s.median_ns = repeats % 2 == 1 ? samples[repeats / 2]
                                   : 0.5 * (samples[repeats / 2 - 1] + samples[repeats / 2]);
    double sum = 0.0;
    for (double v : samples) {
        sum += v;
    }
    s.mean_ns = sum / double(repeats);
    double sq = 0.0;
    for (double v : samples) {
        sq += (v - s.mean_ns) * (v - s.mean_ns);
    }
    s.stddev_ns = std::sqrt(sq / double(repeats));
    return s;
}

std::string csv_line(const std::vector<std::string>& fields) {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) line += ',';
        const std::string& f = fields[i];
        if (f.find_first_of(",\"\n") != std::string::npos) {
            line += '"';
            for (char c : f) {
                if (c == '"') line += '"';
                line += c;
            }
            line += '"';
        } else {
            line += f;
        }
    }
    return line;
}

}  // namespace h1bkv
