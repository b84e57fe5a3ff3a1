#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fedsim {

// Labeled examples with row-major feature storage. Pixels are scaled to
// [0,1]; synthetic features are raw coordinates.
struct Dataset {
    std::vector<double> features;  // size() == labels.size() * feature_dim
    std::vector<int> labels;       // each in [0, class_count)
    int feature_dim = 0;
    int class_count = 0;

    std::size_t size() const { return labels.size(); }
    const double* example(std::size_t i) const {
        return features.data() + i * static_cast<std::size_t>(feature_dim);
    }
};

// Per-client example-index assignments. Disjoint, and together they cover
// the intended training set.
struct PartitionPlan {
    std::vector<std::vector<std::uint32_t>> assignments;

    std::size_t clients() const { return assignments.size(); }
    std::size_t sample_count(std::size_t m) const { return assignments[m].size(); }
    std::size_t total_samples() const;
    // alpha_m = |D_m| / sum_c |D_c|
    std::vector<double> coefficients() const;
};

// Reads an IDX image/label file pair. Files with a ".gz" extension are
// decompressed on the fly. Pixel bytes are scaled by 1/255.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

// class_count Gaussian clusters with centers on the unit sphere, per_class
// examples each, labels grouped by class. Deterministic by seed.
Dataset synth_blobs(int class_count, int dim, int per_class, double spread,
                    std::uint64_t seed);

// Seeded shuffle split into clients parts with sizes differing by at most 1.
PartitionPlan partition_iid(const Dataset& dataset, int clients, std::uint64_t seed);

// Sort by label, cut into clients*classes_per_client equal contiguous shards,
// deal classes_per_client shards to each client by a seeded permutation.
// A remainder of size() mod shard_count examples (the tail of the sorted
// order) is dropped; callers relying on full coverage should size datasets
// to divide evenly.
PartitionPlan partition_label_shards(const Dataset& dataset, int clients,
                                     int classes_per_client, std::uint64_t seed);

}  // namespace fedsim
