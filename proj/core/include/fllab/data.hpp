#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fllab/linalg.hpp"
#include "fllab/types.hpp"

namespace fllab::data {

struct Dataset {
    Matrix features;  // (total, d)
    std::vector<Label> labels;
    std::size_t num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return features.cols(); }
};

/// Index lists into a parent dataset, one per client.
struct Partition {
    std::vector<std::vector<std::size_t>> client_indices;

    std::size_t clients() const noexcept { return client_indices.size(); }
};

/// Gaussian blobs: class c is centred at margin * e_c with unit isotropic
/// noise. Labels are i mod classes, then shuffled, so class counts differ by
/// at most one.
Dataset synth_classification(std::size_t total, std::size_t dim, std::size_t classes, double margin,
                             std::uint64_t seed);

/// Per label: shuffle that label's indices, draw client proportions from
/// Dirichlet(alpha, ..., alpha), and cut the shuffled list at the rounded
/// cumulative proportions. Redraws (up to 100 attempts) when a client ends
/// up empty, then throws PartitionError.
Partition partition_dirichlet(const Dataset& ds, std::size_t clients, double alpha, std::uint64_t seed);

/// Each client draws labels_per_client distinct labels; every label must be
/// held by at least one client (redrawn, up to 100 attempts). Each label's
/// shuffled samples are split into near-equal contiguous shards among its
/// holders.
Partition partition_labels(const Dataset& ds, std::size_t clients, std::size_t labels_per_client,
                           std::uint64_t seed);

/// Global shuffle followed by a round-robin deal.
Partition partition_iid(const Dataset& ds, std::size_t clients, std::uint64_t seed);

/// Rows of `ds` at `indices`, in that order.
Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);

struct Split {
    Dataset train;
    Dataset test;
};

/// Shuffles once and holds out the last `test_count` samples.
Split holdout(const Dataset& ds, std::size_t test_count, std::uint64_t seed);

/// Label histogram of the indexed rows.
std::vector<std::size_t> label_histogram(const Dataset& ds, std::span<const std::size_t> indices);

/// Throws PartitionError unless the lists are disjoint, non-empty, and
/// cover [0, total).
void validate_partition(const Partition& p, std::size_t total);

/// "FLDS1", u32 total, u32 dim, u32 classes (little-endian), row-major f64
/// features, u16 labels.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace fllab::data
