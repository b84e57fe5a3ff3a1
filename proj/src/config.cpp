#include "fedsim/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fedsim/errors.hpp"

namespace fedsim {

namespace {

using nlohmann::json;

struct KeyLine {
    std::string key;
    int line;
};

// Line numbers for the top-level members of `text`, which must already have
// parsed as valid JSON. Nested strings and punctuation inside values are
// skipped by tracking depth and string state.
std::vector<KeyLine> scan_member_lines(const std::string& text) {
    std::vector<KeyLine> out;
    int line = 1;
    int depth = 0;
    bool in_string = false;
    bool escape = false;
    bool expect_key = true;
    bool capturing = false;
    std::string current;
    for (char ch : text) {
        if (ch == '\n') ++line;
        if (in_string) {
            if (escape) {
                if (capturing) current += ch;
                escape = false;
            } else if (ch == '\\') {
                if (capturing) current += ch;
                escape = true;
            } else if (ch == '"') {
                in_string = false;
                if (capturing) {
                    out.push_back({current, line});
                    capturing = false;
                }
            } else if (capturing) {
                current += ch;
            }
            continue;
        }
        switch (ch) {
            case '"':
                in_string = true;
                if (depth == 1 && expect_key) {
                    capturing = true;
                    current.clear();
                    expect_key = false;
                }
                break;
            case '{':
            case '[':
                ++depth;
                break;
            case '}':
            case ']':
                --depth;
                break;
            case ',':
                if (depth == 1) expect_key = true;
                break;
            default:
                break;
        }
    }
    return out;
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "algorithm",
        "dataset.kind",
        "dataset.images",
        "dataset.labels",
        "dataset.test_images",
        "dataset.test_labels",
        "synth.classes",
        "synth.dim",
        "synth.per_class",
        "synth.test_per_class",
        "synth.spread",
        "distribution",
        "distribution.classes_per_client",
        "clients",
        "learner.kind",
        "learner.hidden_dims",
        "sgd.learning_rate",
        "sgd.batch_size",
        "sgd.local_epochs",
        "timing.tau_base",
        "timing.upload",
        "timing.download",
        "timing.slowdown",
        "timing.slowdown_max",
        "gamma",
        "rho",
        "scheduler",
        "adapt.enabled",
        "adapt.e_max",
        "seed",
        "budget.slots",
        "eval.cadence_slots",
    };
    return keys;
}

class ConfigReader {
public:
    ConfigReader(const json& doc, std::map<std::string, int> lines, std::string name)
        : doc_(doc), lines_(std::move(lines)), name_(std::move(name)) {}

    bool has(const std::string& key) const { return doc_.contains(key); }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        std::ostringstream msg;
        msg << name_ << ": key '" << key << "'";
        const auto it = lines_.find(key);
        if (it != lines_.end()) msg << " (line " << it->second << ")";
        msg << ": " << what;
        throw ConfigError(msg.str());
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        if (!has(key)) return fallback;
        const json& v = doc_.at(key);
        if (!v.is_string()) fail(key, "expected a string");
        return v.get<std::string>();
    }

    std::string require_string(const std::string& key) const {
        if (!has(key)) {
            throw ConfigError(name_ + ": missing required key '" + key + "'");
        }
        return get_string(key, "");
    }

    std::string enum_value(const std::string& key, const std::string& fallback,
                           const std::set<std::string>& allowed) const {
        const std::string value = get_string(key, fallback);
        if (allowed.count(value) == 0) {
            std::ostringstream what;
            what << "unexpected value '" << value << "', allowed:";
            for (const std::string& a : allowed) what << " " << a;
            fail(key, what.str());
        }
        return value;
    }

    std::int64_t get_int(const std::string& key, std::int64_t fallback,
                         std::int64_t min_value) const {
        if (!has(key)) return fallback;
        const json& v = doc_.at(key);
        if (!v.is_number_integer() && !v.is_number_unsigned()) fail(key, "expected an integer");
        const std::int64_t value = v.get<std::int64_t>();
        if (value < min_value) {
            std::ostringstream what;
            what << "must be >= " << min_value << ", got " << value;
            fail(key, what.str());
        }
        return value;
    }

    double get_double(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        const json& v = doc_.at(key);
        if (!v.is_number()) fail(key, "expected a number");
        const double value = v.get<double>();
        if (!std::isfinite(value)) fail(key, "must be finite");
        return value;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const json& v = doc_.at(key);
        if (!v.is_boolean()) fail(key, "expected true or false");
        return v.get<bool>();
    }

    std::uint64_t get_seed(const std::string& key, std::uint64_t fallback) const {
        if (!has(key)) return fallback;
        const json& v = doc_.at(key);
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer()) {
            const std::int64_t value = v.get<std::int64_t>();
            if (value < 0) fail(key, "must be >= 0");
            return static_cast<std::uint64_t>(value);
        }
        fail(key, "expected a nonnegative integer");
    }

    std::vector<int> get_int_array(const std::string& key, int min_value) const {
        const json& v = doc_.at(key);
        if (!v.is_array()) fail(key, "expected an array of integers");
        std::vector<int> out;
        for (const json& item : v) {
            if (!item.is_number_integer() && !item.is_number_unsigned()) {
                fail(key, "expected an array of integers");
            }
            const std::int64_t value = item.get<std::int64_t>();
            if (value < min_value) {
                std::ostringstream what;
                what << "entries must be >= " << min_value << ", got " << value;
                fail(key, what.str());
            }
            out.push_back(static_cast<int>(value));
        }
        return out;
    }

    std::vector<double> get_double_array(const std::string& key) const {
        const json& v = doc_.at(key);
        if (!v.is_array()) fail(key, "expected an array of numbers");
        std::vector<double> out;
        for (const json& item : v) {
            if (!item.is_number()) fail(key, "expected an array of numbers");
            const double value = item.get<double>();
            if (!std::isfinite(value)) fail(key, "entries must be finite");
            out.push_back(value);
        }
        return out;
    }

    void reject(const std::string& key, const std::string& reason) const {
        if (has(key)) fail(key, reason);
    }

    void require_file(const std::string& key, const std::string& path) const {
        if (!std::filesystem::exists(path)) fail(key, "file not found '" + path + "'");
    }

    const std::string& name() const { return name_; }

private:
    const json& doc_;
    std::map<std::string, int> lines_;
    std::string name_;
};

void positive(const ConfigReader& r, const std::string& key, double value) {
    if (!(value > 0.0)) {
        std::ostringstream what;
        what << "must be > 0, got " << value;
        r.fail(key, what.str());
    }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& name) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(name + ": invalid JSON: " + e.what());
    }
    if (!doc.is_object()) throw ConfigError(name + ": top level must be a JSON object");

    std::map<std::string, int> lines;
    for (const KeyLine& kl : scan_member_lines(text)) {
        const auto [it, inserted] = lines.emplace(kl.key, kl.line);
        if (!inserted) {
            std::ostringstream msg;
            msg << name << ": duplicate key '" << kl.key << "' (lines " << it->second
                << " and " << kl.line << ")";
            throw ConfigError(msg.str());
        }
    }

    ConfigReader r(doc, lines, name);
    for (const auto& [key, value] : doc.items()) {
        if (known_keys().count(key) == 0) {
            std::ostringstream msg;
            msg << name << ": unknown key '" << key << "'";
            const auto it = lines.find(key);
            if (it != lines.end()) msg << " (line " << it->second << ")";
            throw ConfigError(msg.str());
        }
        if (value.is_object()) r.fail(key, "nested objects are not supported, use dotted keys");
    }

    ExperimentConfig cfg;
    cfg.algorithm = r.require_string("algorithm");
    if (cfg.algorithm != "sfl" && cfg.algorithm != "afl-baseline" && cfg.algorithm != "csmaafl") {
        r.fail("algorithm", "unexpected value '" + cfg.algorithm +
                                "', allowed: sfl afl-baseline csmaafl");
    }
    cfg.dataset_kind = r.require_string("dataset.kind");
    if (cfg.dataset_kind != "idx-files" && cfg.dataset_kind != "synth-blobs") {
        r.fail("dataset.kind", "unexpected value '" + cfg.dataset_kind +
                                   "', allowed: idx-files synth-blobs");
    }

    if (cfg.dataset_kind == "idx-files") {
        cfg.images = r.require_string("dataset.images");
        cfg.labels = r.require_string("dataset.labels");
        cfg.test_images = r.require_string("dataset.test_images");
        cfg.test_labels = r.require_string("dataset.test_labels");
        r.require_file("dataset.images", cfg.images);
        r.require_file("dataset.labels", cfg.labels);
        r.require_file("dataset.test_images", cfg.test_images);
        r.require_file("dataset.test_labels", cfg.test_labels);
        for (const char* key : {"synth.classes", "synth.dim", "synth.per_class",
                                "synth.test_per_class", "synth.spread"}) {
            r.reject(key, "only valid when dataset.kind is synth-blobs");
        }
    } else {
        for (const char* key : {"dataset.images", "dataset.labels", "dataset.test_images",
                                "dataset.test_labels"}) {
            r.reject(key, "only valid when dataset.kind is idx-files");
        }
        cfg.synth_classes = static_cast<int>(r.get_int("synth.classes", 10, 2));
        cfg.synth_dim = static_cast<int>(r.get_int("synth.dim", 20, 1));
        cfg.synth_per_class = static_cast<int>(r.get_int("synth.per_class", 600, 1));
        cfg.synth_test_per_class = static_cast<int>(r.get_int("synth.test_per_class", 100, 1));
        cfg.synth_spread = r.get_double("synth.spread", 0.35);
        positive(r, "synth.spread", cfg.synth_spread);
    }

    cfg.distribution = r.enum_value("distribution", "iid", {"iid", "label-shards"});
    if (cfg.distribution == "label-shards") {
        cfg.classes_per_client =
            static_cast<int>(r.get_int("distribution.classes_per_client", 2, 1));
    } else {
        r.reject("distribution.classes_per_client",
                 "only valid when distribution is label-shards");
    }

    cfg.clients = static_cast<int>(r.get_int("clients", 100, 1));

    cfg.learner_kind = r.enum_value("learner.kind", "softmax", {"softmax", "mlp"});
    if (cfg.learner_kind == "mlp") {
        cfg.hidden_dims = r.has("learner.hidden_dims")
                              ? r.get_int_array("learner.hidden_dims", 1)
                              : std::vector<int>{32};
        if (cfg.hidden_dims.empty()) r.fail("learner.hidden_dims", "must not be empty");
    } else {
        r.reject("learner.hidden_dims", "only valid when learner.kind is mlp");
    }

    cfg.sgd.learning_rate = r.get_double("sgd.learning_rate", 0.01);
    if (cfg.sgd.learning_rate < 0.0) r.fail("sgd.learning_rate", "must be >= 0");
    cfg.sgd.batch_size = static_cast<int>(r.get_int("sgd.batch_size", 5, 1));
    cfg.sgd.local_epochs = static_cast<int>(r.get_int("sgd.local_epochs", 1, 1));

    cfg.tau_base = r.get_int("timing.tau_base", 10, 1);
    cfg.upload = r.get_int("timing.upload", 1, 1);
    cfg.download = r.get_int("timing.download", 1, 1);
    if (r.has("timing.slowdown")) {
        r.reject("timing.slowdown_max", "conflicts with timing.slowdown");
        cfg.slowdown = r.get_double_array("timing.slowdown");
        if (static_cast<int>(cfg.slowdown.size()) != cfg.clients) {
            std::ostringstream what;
            what << "needs one factor per client (" << cfg.clients << "), got "
                 << cfg.slowdown.size();
            r.fail("timing.slowdown", what.str());
        }
        for (double a : cfg.slowdown) {
            if (a < 1.0) r.fail("timing.slowdown", "factors must be >= 1");
        }
    } else {
        cfg.slowdown_max = r.get_double("timing.slowdown_max", 1.0);
        if (cfg.slowdown_max < 1.0) r.fail("timing.slowdown_max", "must be >= 1");
    }

    cfg.gamma = r.get_double("gamma", 0.2);
    positive(r, "gamma", cfg.gamma);
    cfg.rho = r.get_double("rho", 0.9);
    if (!(cfg.rho > 0.0 && cfg.rho < 1.0)) r.fail("rho", "must be in (0, 1)");
    cfg.scheduler = r.enum_value("scheduler", "slot", {"slot", "randomized-trunk"});
    cfg.adapt_enabled = r.get_bool("adapt.enabled", true);
    cfg.e_max = static_cast<int>(r.get_int("adapt.e_max", 8, 1));

    cfg.seed = r.get_seed("seed", 0);
    cfg.budget_slots = r.get_double("budget.slots", 60.0);
    positive(r, "budget.slots", cfg.budget_slots);
    cfg.eval_cadence_slots = r.get_double("eval.cadence_slots", 1.0);
    positive(r, "eval.cadence_slots", cfg.eval_cadence_slots);

    return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    ExperimentConfig cfg = parse_config_text(buffer.str(), path.filename().string());
    cfg.source_path = path;
    return cfg;
}

}  // namespace fedsim
