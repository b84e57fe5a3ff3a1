#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedsim/afl_baseline.hpp"
#include "fedsim/config.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/experiment.hpp"
#include "fedsim/timing.hpp"

namespace {

std::uint64_t parse_env_seed(const char* text) {
    errno = 0;
    char* end = nullptr;
    const unsigned long long value = std::strtoull(text, &end, 10);
    if (errno != 0 || end == text || *end != '\0' || text[0] == '-') {
        throw fedsim::ConfigError(std::string("FEDSIM_SEED must be a nonnegative integer, got '") +
                                  text + "'");
    }
    return value;
}

int run_command(const std::string& config_path, bool seed_given, std::uint64_t seed,
                std::string out_path, const std::string& trace_path) {
    fedsim::ExperimentConfig cfg = fedsim::parse_config(config_path);
    if (seed_given) {
        cfg.seed = seed;
    } else if (const char* env = std::getenv("FEDSIM_SEED")) {
        cfg.seed = parse_env_seed(env);
    }
    if (out_path.empty()) {
        out_path = std::filesystem::path(config_path).stem().string() + ".csv";
    }
    const fedsim::ExperimentSummary summary =
        fedsim::run_experiment(cfg, out_path, trace_path);
    std::printf("final_accuracy=%.4f final_loss=%.4f aggregations=%" PRId64
                " sim_time=%" PRId64 " rows=%zu csv=%s\n",
                summary.final_accuracy, summary.final_loss, summary.aggregations,
                summary.simulated_time, summary.rows, summary.metrics_path.c_str());
    return 0;
}

int solve_betas_command(const std::vector<double>& alphas,
                        std::vector<std::uint32_t> schedule) {
    if (schedule.empty()) {
        schedule.resize(alphas.size());
        for (std::size_t i = 0; i < schedule.size(); ++i) {
            schedule[i] = static_cast<std::uint32_t>(i);
        }
    }
    const fedsim::BetaSchedule solved = fedsim::solve_betas(alphas, schedule);
    std::printf("clients=%zu\n", alphas.size());
    for (std::size_t k = 0; k < solved.betas.size(); ++k) {
        std::printf("position=%zu client=%u beta=%.17g local_weight=%.17g\n", k + 1,
                    solved.schedule[k], solved.betas[k], 1.0 - solved.betas[k]);
    }
    return 0;
}

int timing_command(const std::string& mode, int clients, fedsim::Tick compute,
                   fedsim::Tick fastest, fedsim::Tick upload, fedsim::Tick download) {
    if (fastest < 0) fastest = compute;
    if (mode == "sfl") {
        std::printf("sfl_round_ticks=%" PRId64 "\n",
                    fedsim::sfl_round_time(clients, compute, upload, download));
    } else {
        const auto [lo, hi] =
            fedsim::afl_trunk_time_bounds(clients, fastest, compute, upload, download);
        std::printf("afl_trunk_min_ticks=%" PRId64 "\n", lo);
        std::printf("afl_trunk_max_ticks=%" PRId64 "\n", hi);
        std::printf("steady_aggregation_interval_ticks=%" PRId64 "\n", upload + download);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic federated learning simulator"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run one experiment from a config file");
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_path;
    std::string trace_path;
    run->add_option("--config", config_path, "experiment config (flat JSON)")->required();
    auto* seed_opt = run->add_option("--seed", seed, "override the config seed");
    run->add_option("--out", out_path, "metrics CSV path (default: <config stem>.csv)");
    run->add_option("--trace", trace_path, "also write the simulated event log");

    auto* compare = app.add_subcommand("compare", "compare two or more metrics files");
    std::vector<std::string> compare_inputs;
    std::string report_path;
    bool plot_data = false;
    compare->add_option("files", compare_inputs, "metrics CSV files")->required();
    compare->add_option("--out", report_path, "report path")->required();
    compare->add_flag("--plot-data", plot_data, "also write gnuplot data blocks");

    auto* solve = app.add_subcommand("solve-betas",
                                     "solve the per-position blend weights for one pass");
    std::vector<double> alphas;
    std::vector<std::uint32_t> schedule;
    solve->add_option("--alphas", alphas, "aggregation coefficients, must sum to 1")
        ->delimiter(',')
        ->required();
    solve->add_option("--schedule", schedule,
                      "upload order as 0-based client ids (default: 0,1,...)")
        ->delimiter(',');

    auto* timing = app.add_subcommand("timing", "print closed-form round/trunk durations");
    std::string mode;
    int clients = 0;
    fedsim::Tick compute = 0;
    fedsim::Tick fastest = -1;
    fedsim::Tick upload = 0;
    fedsim::Tick download = 0;
    timing->add_option("--mode", mode, "sfl or afl")
        ->required()
        ->check(CLI::IsMember({"sfl", "afl"}));
    timing->add_option("--clients", clients, "client count")->required();
    timing->add_option("--compute", compute, "slowest local pass in ticks")->required();
    timing->add_option("--fastest", fastest, "fastest local pass in ticks (afl only)");
    timing->add_option("--upload", upload, "upload ticks")->required();
    timing->add_option("--download", download, "download ticks")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(run)) {
            return run_command(config_path, seed_opt->count() > 0, seed, out_path, trace_path);
        }
        if (app.got_subcommand(compare)) {
            std::vector<std::filesystem::path> paths(compare_inputs.begin(),
                                                     compare_inputs.end());
            fedsim::compare_runs(paths, report_path, plot_data);
            std::printf("report written to %s\n", report_path.c_str());
            return 0;
        }
        if (app.got_subcommand(solve)) {
            return solve_betas_command(alphas, schedule);
        }
        return timing_command(mode, clients, compute, fastest, upload, download);
    } catch (const fedsim::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
