#include "fedsim/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

// Whole file into memory, inflating ".gz" files.
std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw IngestionError("file not found: " + path.string());
    }
    std::vector<unsigned char> bytes;
    if (path.extension() == ".gz") {
        gzFile gz = gzopen(path.string().c_str(), "rb");
        if (gz == nullptr) throw IngestionError("cannot open " + path.string());
        unsigned char buf[1 << 16];
        int n;
        while ((n = gzread(gz, buf, sizeof(buf))) > 0) {
            bytes.insert(bytes.end(), buf, buf + n);
        }
        const bool failed = n < 0;
        gzclose(gz);
        if (failed) throw IngestionError("gzip decompression failed for " + path.string());
    } else {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IngestionError("cannot open " + path.string());
        bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    return bytes;
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
    if (offset + 4 > bytes.size()) {
        std::ostringstream msg;
        msg << path.string() << ": truncated at offset " << offset << " (need 4 bytes, have "
            << bytes.size() - offset << ")";
        throw IngestionError(msg.str());
    }
    return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
           (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[offset + 3]);
}

void check_magic(std::uint32_t got, std::uint32_t expected, const std::filesystem::path& path) {
    if (got != expected) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "%s: bad magic 0x%08x at offset 0, expected 0x%08x", path.string().c_str(),
                      got, expected);
        throw IngestionError(buf);
    }
}

void check_payload(const std::vector<unsigned char>& bytes, std::size_t header,
                   std::size_t payload, const std::filesystem::path& path) {
    if (bytes.size() < header + payload) {
        std::ostringstream msg;
        msg << path.string() << ": truncated at offset " << bytes.size() << " (expected "
            << header + payload << " bytes)";
        throw IngestionError(msg.str());
    }
}

}  // namespace

std::size_t PartitionPlan::total_samples() const {
    std::size_t n = 0;
    for (const auto& a : assignments) n += a.size();
    return n;
}

std::vector<double> PartitionPlan::coefficients() const {
    const double total = static_cast<double>(total_samples());
    std::vector<double> alpha(assignments.size());
    for (std::size_t m = 0; m < assignments.size(); ++m) {
        alpha[m] = static_cast<double>(assignments[m].size()) / total;
    }
    return alpha;
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
    const auto image_bytes = read_file_bytes(images_path);
    check_magic(read_be32(image_bytes, 0, images_path), kImagesMagic, images_path);
    const std::uint32_t image_count = read_be32(image_bytes, 4, images_path);
    const std::uint32_t rows = read_be32(image_bytes, 8, images_path);
    const std::uint32_t cols = read_be32(image_bytes, 12, images_path);
    const std::size_t dim = static_cast<std::size_t>(rows) * cols;
    check_payload(image_bytes, 16, static_cast<std::size_t>(image_count) * dim, images_path);

    const auto label_bytes = read_file_bytes(labels_path);
    check_magic(read_be32(label_bytes, 0, labels_path), kLabelsMagic, labels_path);
    const std::uint32_t label_count = read_be32(label_bytes, 4, labels_path);
    check_payload(label_bytes, 8, label_count, labels_path);

    if (image_count != label_count) {
        std::ostringstream msg;
        msg << "image count " << image_count << " (" << images_path.string()
            << ") does not match label count " << label_count << " (" << labels_path.string()
            << ")";
        throw IngestionError(msg.str());
    }

    Dataset ds;
    ds.feature_dim = static_cast<int>(dim);
    ds.features.resize(static_cast<std::size_t>(image_count) * dim);
    ds.labels.resize(image_count);
    for (std::size_t i = 0; i < image_count; ++i) {
        const unsigned char* px = image_bytes.data() + 16 + i * dim;
        for (std::size_t j = 0; j < dim; ++j) {
            ds.features[i * dim + j] = static_cast<double>(px[j]) / 255.0;
        }
        ds.labels[i] = static_cast<int>(label_bytes[8 + i]);
    }
    int max_label = 0;
    for (int y : ds.labels) max_label = std::max(max_label, y);
    ds.class_count = max_label + 1;
    return ds;
}

Dataset synth_blobs(int class_count, int dim, int per_class, double spread,
                    std::uint64_t seed) {
    if (class_count < 2) throw ConfigError("synth_blobs: class_count must be >= 2");
    if (per_class < 1) throw ConfigError("synth_blobs: per_class must be >= 1");
    if (dim < 1) throw ConfigError("synth_blobs: dim must be >= 1");

    Rng rng(seed);
    // class centers on the unit sphere
    std::vector<double> centers(static_cast<std::size_t>(class_count) * dim);
    for (int c = 0; c < class_count; ++c) {
        double* center = centers.data() + static_cast<std::size_t>(c) * dim;
        double norm = 0.0;
        do {
            norm = 0.0;
            for (int j = 0; j < dim; ++j) {
                center[j] = rng.next_normal();
                norm += center[j] * center[j];
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (int j = 0; j < dim; ++j) center[j] /= norm;
    }

    Dataset ds;
    ds.feature_dim = dim;
    ds.class_count = class_count;
    ds.features.resize(static_cast<std::size_t>(class_count) * per_class * dim);
    ds.labels.resize(static_cast<std::size_t>(class_count) * per_class);
    std::size_t row = 0;
    for (int c = 0; c < class_count; ++c) {
        const double* center = centers.data() + static_cast<std::size_t>(c) * dim;
        for (int k = 0; k < per_class; ++k, ++row) {
            double* x = ds.features.data() + row * dim;
            for (int j = 0; j < dim; ++j) x[j] = center[j] + spread * rng.next_normal();
            ds.labels[row] = c;
        }
    }
    return ds;
}

PartitionPlan partition_iid(const Dataset& dataset, int clients, std::uint64_t seed) {
    const std::size_t n = dataset.size();
    if (clients < 1) throw ConfigError("partition_iid: need at least one client");
    if (static_cast<std::size_t>(clients) > n) {
        std::ostringstream msg;
        msg << "partition_iid: " << clients << " clients but only " << n << " examples";
        throw ConfigError(msg.str());
    }

    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(seed);
    rng.shuffle(order);

    PartitionPlan plan;
    plan.assignments.resize(static_cast<std::size_t>(clients));
    const std::size_t base = n / clients;
    const std::size_t extra = n % clients;
    std::size_t pos = 0;
    for (std::size_t m = 0; m < static_cast<std::size_t>(clients); ++m) {
        const std::size_t take = base + (m < extra ? 1 : 0);
        plan.assignments[m].assign(order.begin() + pos, order.begin() + pos + take);
        pos += take;
    }
    return plan;
}

PartitionPlan partition_label_shards(const Dataset& dataset, int clients,
                                     int classes_per_client, std::uint64_t seed) {
    if (clients < 1) throw ConfigError("partition_label_shards: need at least one client");
    if (classes_per_client < 1) {
        throw ConfigError("partition_label_shards: classes_per_client must be >= 1");
    }
    const std::size_t n = dataset.size();
    const std::size_t shard_count =
        static_cast<std::size_t>(clients) * static_cast<std::size_t>(classes_per_client);
    const std::size_t shard_size = n / shard_count;
    if (shard_size == 0) {
        std::ostringstream msg;
        msg << "partition_label_shards: dataset of " << n << " examples cannot form "
            << shard_count << " shards";
        throw ConfigError(msg.str());
    }

    // stable sort by label keeps within-label order deterministic
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&dataset](std::uint32_t a, std::uint32_t b) {
        return dataset.labels[a] < dataset.labels[b];
    });

    const auto shard_of = random_permutation(shard_count, seed);

    PartitionPlan plan;
    plan.assignments.resize(static_cast<std::size_t>(clients));
    for (std::size_t m = 0; m < static_cast<std::size_t>(clients); ++m) {
        auto& mine = plan.assignments[m];
        mine.reserve(shard_size * classes_per_client);
        for (int s = 0; s < classes_per_client; ++s) {
            const std::size_t shard = shard_of[m * classes_per_client + s];
            const std::size_t begin = shard * shard_size;
            mine.insert(mine.end(), order.begin() + begin, order.begin() + begin + shard_size);
        }
    }
    return plan;
}

}  // namespace fedsim
