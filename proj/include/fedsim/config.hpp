#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedsim/model.hpp"
#include "fedsim/timing.hpp"

namespace fedsim {

// Fully resolved experiment description: every field carries its final value
// after defaulting, so two equal ExperimentConfig values describe the same run.
struct ExperimentConfig {
    std::string algorithm;        // sfl | afl-baseline | csmaafl
    std::string dataset_kind;     // idx-files | synth-blobs

    // idx-files inputs
    std::string images;
    std::string labels;
    std::string test_images;
    std::string test_labels;

    // synth-blobs inputs
    int synth_classes = 10;
    int synth_dim = 20;
    int synth_per_class = 600;
    int synth_test_per_class = 100;
    double synth_spread = 0.35;

    std::string distribution = "iid";  // iid | label-shards
    int classes_per_client = 2;

    int clients = 100;

    std::string learner_kind = "softmax";  // softmax | mlp
    std::vector<int> hidden_dims;          // mlp only

    SgdConfig sgd;

    Tick tau_base = 10;
    Tick upload = 1;
    Tick download = 1;
    std::vector<double> slowdown;  // per-client factors; empty = drawn from slowdown_max
    double slowdown_max = 1.0;

    double gamma = 0.2;
    double rho = 0.9;
    std::string scheduler = "slot";  // slot | randomized-trunk
    bool adapt_enabled = true;
    int e_max = 8;

    std::uint64_t seed = 0;
    double budget_slots = 60.0;
    double eval_cadence_slots = 1.0;

    std::filesystem::path source_path;  // where the config was read from, for messages
};

// Parses and validates a flat JSON object with dotted keys. Errors name the
// offending key and, where one exists, its line in the file.
ExperimentConfig parse_config(const std::filesystem::path& path);

// Same, from in-memory text; `name` stands in for the file name in messages.
ExperimentConfig parse_config_text(const std::string& text, const std::string& name);

}  // namespace fedsim
