#include "fedsim/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fedsim/data.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

namespace {

constexpr std::uint64_t kDataTag = 0x64617461;      // dataset synthesis
constexpr std::uint64_t kPartitionTag = 0x70617274; // partition draw
constexpr std::uint64_t kSlowdownTag = 0x736c6f77;  // client slowdown draw

void append_rows(Dataset& dst, const Dataset& src, std::size_t first, std::size_t count) {
    const std::size_t d = static_cast<std::size_t>(src.feature_dim);
    dst.features.insert(dst.features.end(), src.features.begin() + first * d,
                        src.features.begin() + (first + count) * d);
    dst.labels.insert(dst.labels.end(), src.labels.begin() + first,
                      src.labels.begin() + first + count);
}

void make_synth_split(const ExperimentConfig& cfg, Dataset& train, Dataset& test) {
    const std::size_t per = static_cast<std::size_t>(cfg.synth_per_class);
    const std::size_t per_test = static_cast<std::size_t>(cfg.synth_test_per_class);
    // one draw covers train and test so both see the same class centers
    const Dataset all = synth_blobs(cfg.synth_classes, cfg.synth_dim,
                                    static_cast<int>(per + per_test), cfg.synth_spread,
                                    mix_seed(cfg.seed, kDataTag));
    train.feature_dim = test.feature_dim = all.feature_dim;
    train.class_count = test.class_count = all.class_count;
    for (int c = 0; c < cfg.synth_classes; ++c) {
        const std::size_t base = static_cast<std::size_t>(c) * (per + per_test);
        append_rows(train, all, base, per);
        append_rows(test, all, base + per, per_test);
    }
}

std::string format_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", value);
    return buf;
}

std::string format_fixed(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", value);
    return buf;
}

struct LoadedRun {
    std::filesystem::path path;
    std::string label;
    std::vector<MetricsRecord> records;
};

std::vector<LoadedRun> load_runs(const std::vector<std::filesystem::path>& csv_paths) {
    std::vector<LoadedRun> runs;
    for (const std::filesystem::path& path : csv_paths) {
        LoadedRun run;
        run.path = path;
        run.records = read_metrics_csv(path);
        if (run.records.empty()) {
            throw ConfigError("metrics file '" + path.string() + "' has no rows");
        }
        for (std::size_t i = 1; i < run.records.size(); ++i) {
            if (run.records[i].sim_time <= run.records[i - 1].sim_time) {
                std::ostringstream msg;
                msg << "metrics file '" << path.string() << "' is not strictly increasing"
                    << " in sim_time at row " << i + 1;
                throw ConfigError(msg.str());
            }
        }
        run.label = run.records.front().algorithm;
        if (run.label == "csmaafl") {
            run.label += " g=" + format_double(run.records.front().gamma);
        }
        runs.push_back(std::move(run));
    }
    // duplicated labels get a positional suffix so table columns stay distinct
    for (std::size_t i = 0; i < runs.size(); ++i) {
        int clash = 1;
        for (std::size_t j = 0; j < i; ++j) {
            if (runs[j].label == runs[i].label) ++clash;
        }
        if (clash > 1) runs[i].label += " #" + std::to_string(clash);
    }
    return runs;
}

}  // namespace

SimSetup build_setup(const ExperimentConfig& config) {
    SimSetup setup;

    if (config.dataset_kind == "synth-blobs") {
        make_synth_split(config, setup.train, setup.test);
    } else {
        setup.train = load_idx(config.images, config.labels);
        setup.test = load_idx(config.test_images, config.test_labels);
        if (setup.train.feature_dim != setup.test.feature_dim) {
            std::ostringstream msg;
            msg << "train/test feature dimensions differ: " << setup.train.feature_dim
                << " vs " << setup.test.feature_dim;
            throw ConfigError(msg.str());
        }
        const int classes = std::max(setup.train.class_count, setup.test.class_count);
        setup.train.class_count = setup.test.class_count = classes;
    }

    const std::uint64_t partition_seed = mix_seed(config.seed, kPartitionTag);
    if (config.distribution == "iid") {
        setup.plan = partition_iid(setup.train, config.clients, partition_seed);
    } else {
        setup.plan = partition_label_shards(setup.train, config.clients,
                                            config.classes_per_client, partition_seed);
    }

    Rng slowdown_rng(mix_seed(config.seed, kSlowdownTag));
    setup.profiles.resize(static_cast<std::size_t>(config.clients));
    for (int m = 0; m < config.clients; ++m) {
        const double a = config.slowdown.empty()
                             ? 1.0 + slowdown_rng.next_double() * (config.slowdown_max - 1.0)
                             : config.slowdown[static_cast<std::size_t>(m)];
        ClientProfile& p = setup.profiles[static_cast<std::size_t>(m)];
        p.client_id = m;
        p.compute_ticks = std::max<Tick>(
            1, std::llround(a * static_cast<double>(config.tau_base)));
        p.upload_ticks = config.upload;
        p.download_ticks = config.download;
        p.local_epochs = config.sgd.local_epochs;
    }

    setup.learner.kind = learner_kind_from_string(config.learner_kind);
    setup.learner.input_dim = setup.train.feature_dim;
    setup.learner.class_count = setup.train.class_count;
    setup.learner.hidden_dims = config.hidden_dims;

    setup.sgd = config.sgd;
    setup.gamma = config.gamma;
    setup.rho = config.rho;
    setup.e_max = config.e_max;
    setup.adapt_epochs = config.adapt_enabled;
    setup.scheduler = scheduler_mode_from_string(config.scheduler);
    setup.seed = config.seed;
    setup.budget_slots = config.budget_slots;
    setup.eval_cadence_slots = config.eval_cadence_slots;
    setup.validate();
    return setup;
}

RunResult run_configured(const ExperimentConfig& config) {
    const SimSetup setup = build_setup(config);
    if (config.algorithm == "sfl") return run_fedavg(setup);
    if (config.algorithm == "afl-baseline") return run_baseline_afl(setup);
    return run_csmaafl(setup);
}

ExperimentSummary run_experiment(const ExperimentConfig& config,
                                 const std::filesystem::path& out_csv,
                                 const std::filesystem::path& trace_path) {
    RunResult result;
    try {
        result = run_configured(config);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        const std::string context = config.source_path.empty()
                                        ? config.algorithm
                                        : config.source_path.string();
        throw std::runtime_error("experiment '" + context + "' failed: " + e.what());
    }
    write_metrics_csv(out_csv, result.records);
    if (!trace_path.empty()) {
        std::vector<SimEvent> ordered = result.event_trace;
        std::stable_sort(ordered.begin(), ordered.end(),
                         [](const SimEvent& a, const SimEvent& b) { return event_after(b, a); });
        write_event_trace(trace_path, ordered);
    }

    ExperimentSummary summary;
    summary.metrics_path = out_csv;
    summary.aggregations = result.iterations;
    summary.simulated_time = result.final_time;
    summary.rows = result.records.size();
    if (!result.records.empty()) {
        summary.final_accuracy = result.records.back().accuracy;
        summary.final_loss = result.records.back().loss;
    }
    return summary;
}

void compare_runs(const std::vector<std::filesystem::path>& csv_paths,
                  const std::filesystem::path& out_path, bool plot_data) {
    if (csv_paths.size() < 2) {
        throw ConfigError("need at least two metrics files to compare, got " +
                          std::to_string(csv_paths.size()));
    }
    const std::vector<LoadedRun> runs = load_runs(csv_paths);

    std::set<double> times;
    std::vector<std::map<double, const MetricsRecord*>> by_time(runs.size());
    for (std::size_t i = 0; i < runs.size(); ++i) {
        for (const MetricsRecord& rec : runs[i].records) {
            times.insert(rec.relative_time);
            by_time[i].emplace(rec.relative_time, &rec);
        }
    }

    std::ofstream out(out_path);
    if (!out) throw ConfigError("cannot write report '" + out_path.string() + "'");

    out << "run comparison\n";
    out << "relative time: simulated time divided by the duration of one synchronous"
           " round under the run's own timing configuration\n\n";

    out << "runs:\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
        out << "  [" << i + 1 << "] " << runs[i].label << "  (" << runs[i].path.string()
            << ")\n";
    }
    out << "\n";

    out << "final metrics:\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const MetricsRecord& last = runs[i].records.back();
        out << "  [" << i + 1 << "] " << runs[i].label
            << ": accuracy " << format_fixed(last.accuracy)
            << ", loss " << format_fixed(last.loss)
            << ", iterations " << last.iteration
            << ", relative time " << format_double(last.relative_time) << "\n";
    }
    out << "\n";

    out << "accuracy by relative time:\n";
    out << "  rel_time";
    for (std::size_t i = 0; i < runs.size(); ++i) out << "\t[" << i + 1 << "]";
    out << "\n";
    for (double t : times) {
        out << "  " << format_double(t);
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const auto it = by_time[i].find(t);
            out << "\t" << (it == by_time[i].end() ? "-" : format_fixed(it->second->accuracy));
        }
        out << "\n";
    }
    out << "\n";

    out << "earliest relative time reaching another run's final accuracy:\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
        for (std::size_t j = 0; j < runs.size(); ++j) {
            if (i == j) continue;
            const double target = runs[j].records.back().accuracy;
            const MetricsRecord* hit = nullptr;
            for (const MetricsRecord& rec : runs[i].records) {
                if (rec.accuracy >= target) {
                    hit = &rec;
                    break;
                }
            }
            out << "  [" << i + 1 << "] " << runs[i].label << " reaches "
                << format_fixed(target) << " (final of [" << j + 1 << "] " << runs[j].label
                << ") at relative time "
                << (hit ? format_double(hit->relative_time) : std::string("never")) << "\n";
        }
    }
    out << "\n";

    out << "max accuracy gap over shared timestamps:\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
        for (std::size_t j = i + 1; j < runs.size(); ++j) {
            double max_gap = 0.0;
            double at = 0.0;
            std::size_t shared = 0;
            for (const auto& [t, rec] : by_time[i]) {
                const auto it = by_time[j].find(t);
                if (it == by_time[j].end()) continue;
                ++shared;
                const double gap = std::abs(rec->accuracy - it->second->accuracy);
                if (gap > max_gap) {
                    max_gap = gap;
                    at = t;
                }
            }
            out << "  [" << i + 1 << "] vs [" << j + 1 << "]: ";
            if (shared == 0) {
                out << "no shared timestamps\n";
            } else {
                out << format_fixed(max_gap) << " at relative time " << format_double(at)
                    << " (" << shared << " shared timestamps)\n";
            }
        }
    }

    if (plot_data) {
        const std::filesystem::path data_path = out_path.string() + ".dat";
        std::ofstream plot(data_path);
        if (!plot) throw ConfigError("cannot write plot data '" + data_path.string() + "'");
        plot << "# accuracy vs relative time, one index block per run\n";
        plot << "# plot with: plot '" << data_path.string()
             << "' index N using 1:2 with lines\n";
        for (std::size_t i = 0; i < runs.size(); ++i) {
            plot << "# run: " << runs[i].label << "\n";
            for (const MetricsRecord& rec : runs[i].records) {
                plot << format_double(rec.relative_time) << " " << rec.accuracy << "\n";
            }
            if (i + 1 < runs.size()) plot << "\n\n";
        }
        out << "\nplot data written to " << data_path.string() << "\n";
    }
}

}  // namespace fedsim
