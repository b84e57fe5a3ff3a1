#include "fedsim/metrics.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fedsim/errors.hpp"

namespace fedsim {

void write_metrics_csv(const std::filesystem::path& path,
                       std::span<const MetricsRecord> records) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write metrics file " + path.string());
    out << kMetricsCsvHeader << "\n";
    char buf[256];
    for (const MetricsRecord& r : records) {
        std::snprintf(buf, sizeof(buf), "%" PRId64 ",%.17g,%" PRId64 ",%.17g,%.17g",
                      static_cast<std::int64_t>(r.sim_time), r.relative_time, r.iteration,
                      r.loss, r.accuracy);
        out << buf << "," << r.algorithm << ",";
        std::snprintf(buf, sizeof(buf), "%.17g", r.gamma);
        out << buf << "\n";
    }
    if (!out) throw ConfigError("failed writing metrics file " + path.string());
}

std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read metrics file " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kMetricsCsvHeader) {
        throw ConfigError("metrics file " + path.string() + " has an unexpected header");
    }
    std::vector<MetricsRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 7) {
            std::ostringstream msg;
            msg << path.string() << ":" << line_no << ": expected 7 fields, got "
                << fields.size();
            throw ConfigError(msg.str());
        }
        MetricsRecord r;
        try {
            r.sim_time = std::stoll(fields[0]);
            r.relative_time = std::stod(fields[1]);
            r.iteration = std::stoll(fields[2]);
            r.loss = std::stod(fields[3]);
            r.accuracy = std::stod(fields[4]);
            r.algorithm = fields[5];
            r.gamma = std::stod(fields[6]);
        } catch (const std::exception&) {
            std::ostringstream msg;
            msg << path.string() << ":" << line_no << ": malformed record";
            throw ConfigError(msg.str());
        }
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace fedsim
