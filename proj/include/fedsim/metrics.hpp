#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedsim/timing.hpp"

namespace fedsim {

inline constexpr const char* kMetricsCsvHeader =
    "sim_time,relative_time,iteration,loss,accuracy,algorithm,gamma";

// One evaluation of the global model against the held-out test set.
struct MetricsRecord {
    Tick sim_time = 0;
    double relative_time = 0.0;  // sim_time in units of one SFL round
    std::int64_t iteration = 0;  // rounds (sfl) or global iterations (afl)
    double loss = 0.0;
    double accuracy = 0.0;
    std::string algorithm;
    double gamma = 0.0;

    bool operator==(const MetricsRecord&) const = default;
};

// Doubles are written with 17 significant digits so a parse reproduces the
// records exactly.
void write_metrics_csv(const std::filesystem::path& path,
                       std::span<const MetricsRecord> records);

std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

}  // namespace fedsim
