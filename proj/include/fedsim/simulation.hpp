#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/model.hpp"
#include "fedsim/timing.hpp"

namespace fedsim {

enum class SchedulerMode { Slot, RandomizedTrunk };

SchedulerMode scheduler_mode_from_string(const std::string& s);
const char* to_string(SchedulerMode mode);

// Everything the engines need to run: data, partition, learner, timing and
// aggregation parameters. Built from an ExperimentConfig or assembled by
// hand in tests.
struct SimSetup {
    Dataset train;
    Dataset test;
    PartitionPlan plan;
    LearnerSpec learner;
    SgdConfig sgd;  // local_epochs is the base count before any adaptation
    std::vector<ClientProfile> profiles;

    double gamma = 0.2;
    double rho = 0.9;
    int e_max = 8;
    bool adapt_epochs = true;
    SchedulerMode scheduler = SchedulerMode::Slot;

    std::uint64_t seed = 0;
    double budget_slots = 60.0;
    double eval_cadence_slots = 1.0;
    // When >= 0, the trunk-structured engines stop after this many full
    // trunks instead of cutting at the tick budget.
    std::int64_t max_trunks = -1;

    int clients() const { return static_cast<int>(profiles.size()); }
    Tick slowest_compute() const;
    // One SFL round under this timing config; the unit of relative time.
    Tick slot_ticks() const;
    Tick budget_ticks() const;
    void validate() const;
};

// Seed layout shared by all engines so that runs with equal master seeds
// train identical local models.
std::uint64_t model_init_seed(std::uint64_t master_seed);
std::uint64_t client_train_seed(std::uint64_t master_seed, int client_id);

struct AggregationEvent {
    Tick time = 0;
    std::int64_t iteration = 0;  // global iteration after this aggregation
    int client_id = 0;
    std::int64_t gap = 0;        // j - i staleness of the absorbed model
    double local_weight = 0.0;   // coefficient on the uploaded model (1 - beta)
};

struct RunResult {
    std::vector<MetricsRecord> records;
    ModelVector final_model;
    Tick final_time = 0;
    std::int64_t iterations = 0;  // rounds (sfl) or aggregations (afl)
    std::vector<AggregationEvent> aggregations;  // empty for sfl
    std::vector<SimEvent> event_trace;
    std::vector<GrantRecord> grants;  // channel occupancy intervals
    std::vector<Tick> trunk_ends;     // afl engines only
};

// Classical synchronous FedAvg: every client trains each round, sample-count
// weighted aggregate, clock advanced by sfl_round_time.
RunResult run_fedavg(const SimSetup& setup);

// Baseline asynchronous schedule with solved blend weights; reproduces the
// FedAvg aggregate every trunk. Default schedule is fastest client first.
RunResult run_baseline_afl(const SimSetup& setup);
RunResult run_baseline_afl(const SimSetup& setup, std::span<const std::uint32_t> schedule);

// Slot-request scheduling (or randomized-trunk emulation) with the
// staleness-decayed aggregation weight.
RunResult run_csmaafl(const SimSetup& setup);

void write_event_trace(const std::filesystem::path& path,
                       std::span<const SimEvent> events);

}  // namespace fedsim
