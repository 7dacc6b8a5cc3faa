#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fllab/data.hpp"
#include "fllab/federation.hpp"
#include "fllab/presets.hpp"

namespace fllab::config {

enum class PartitionScheme { iid, dirichlet, labels };

struct DataSpec {
    /// Empty: generate synthetic blobs. Otherwise an FLDS1 file.
    std::string file;
    std::size_t train_samples = 4000;
    std::size_t test_samples = 1000;
    std::size_t dim = 32;
    std::size_t classes = 10;
    double margin = 5.0;
    PartitionScheme partition = PartitionScheme::dirichlet;
    double alpha = 0.3;
    std::size_t labels_per_client = 3;
};

struct ModelSpec {
    std::vector<std::size_t> hidden{64, 64};
    federation::SizeOverrides overrides;
};

struct OutputSpec {
    std::string dir;
};

/// A fully resolved experiment: every field has a value.
struct Experiment {
    DataSpec data;
    ModelSpec model;
    federation::FedConfig fed;
    OutputSpec output;
};

/// Parses the sectioned key=value format:
///
///   # comment
///   [data]        file train_samples test_samples dim classes margin
///                 partition alpha labels_per_client
///   [model]       hidden rank blocks
///   [federation]  method rounds clients participants local_epochs batch_size
///                 lr reset_interval ratio init_bound seed weighting
///                 zero_compressed_base random_v_init bytes_per_scalar
///                 parallel_clients diagnostics track_shard_loss
///   [output]      dir
///
/// Unknown sections or keys, malformed values, and violated invariants are
/// all collected and thrown together as one ConfigError with line numbers.
/// Numbers accept a fraction form such as ratio = 1/32.
Experiment parse_config_text(std::string_view text);
Experiment parse_config(const std::filesystem::path& path);

/// Invariant violations across all sections.
std::vector<std::string> validation_errors(const Experiment& e);

/// Canonical text form; parse_config_text(to_config_text(e)) reproduces e.
std::string to_config_text(const Experiment& e);

std::string_view to_string(PartitionScheme p) noexcept;

/// The data pipeline: generate (or load), hold out the test split, partition
/// the training split. All seeds derive from fed.global_seed.
struct PreparedData {
    data::Dataset train;
    data::Dataset test;
    data::Partition partition;
};
PreparedData prepare_data(const Experiment& e);

std::vector<model::LayerSpec> layer_specs(const Experiment& e, std::size_t input_dim, std::size_t classes);

/// Writes resolved_config.txt and metrics.csv into out_dir and runs.
federation::RunResult run_experiment(const Experiment& e, const std::filesystem::path& out_dir,
                                     const std::function<void(const RoundReport&)>& progress = {});

}  // namespace fllab::config
