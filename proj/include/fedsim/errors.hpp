#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

// Bad or inconsistent configuration (files, ranges, dimensions). CLI exit code 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data (IDX parsing and friends).
struct IngestionError : std::runtime_error {
    explicit IngestionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values produced where finite ones are required.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated aggregation contract (coefficient sums, blend weights, staleness).
struct AggregationError : std::runtime_error {
    explicit AggregationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Channel/slot protocol misuse.
struct SchedulerError : std::runtime_error {
    explicit SchedulerError(const std::string& msg) : std::runtime_error(msg) {}
};

// Coefficient solver failures (degenerate inputs, numeric instability).
struct SolverError : std::runtime_error {
    explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fedsim
