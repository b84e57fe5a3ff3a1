#pragma once

#include <filesystem>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/simulation.hpp"

namespace fedsim {

struct ExperimentSummary {
    std::filesystem::path metrics_path;
    double final_accuracy = 0.0;
    double final_loss = 0.0;
    std::int64_t aggregations = 0;
    Tick simulated_time = 0;
    std::size_t rows = 0;
};

// Materializes datasets, partition, and client timing from a parsed config.
// The master seed drives data generation, partitioning, and slowdown draws,
// so engines compared under one seed see identical inputs.
SimSetup build_setup(const ExperimentConfig& config);

// Dispatches to the engine selected by config.algorithm.
RunResult run_configured(const ExperimentConfig& config);

// Runs the experiment and writes the metrics CSV to `out_csv`. A non-empty
// `trace_path` additionally dumps the simulated event log.
ExperimentSummary run_experiment(const ExperimentConfig& config,
                                 const std::filesystem::path& out_csv,
                                 const std::filesystem::path& trace_path = {});

// Writes a plain-text comparison of two or more metrics files: an
// aligned-by-relative-time accuracy table, per-run finals, and the earliest
// relative time at which each run reaches every other run's final accuracy.
// With `plot_data`, appends gnuplot-ready data blocks.
void compare_runs(const std::vector<std::filesystem::path>& csv_paths,
                  const std::filesystem::path& out_path, bool plot_data);

}  // namespace fedsim
