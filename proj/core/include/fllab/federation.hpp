#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fllab/data.hpp"
#include "fllab/model.hpp"
#include "fllab/report.hpp"

namespace fllab::metrics {
class MetricsSink;
}

namespace fllab::federation {

enum class Method { fedavg, fedlmt, fedmud, fedmud_bkd, fedmud_aad, fedmud_bkd_aad, fedmud_f };
enum class Weighting { uniform, by_samples };

struct FedConfig {
    std::size_t rounds = 100;
    std::size_t clients = 100;
    std::size_t participants = 10;
    std::size_t local_epochs = 3;
    std::size_t batch_size = 64;
    double lr = 0.1;
    std::size_t reset_interval = 1;
    Method method = Method::fedmud;
    double ratio = 1.0 / 32.0;
    double init_bound = 0.1;
    std::uint64_t global_seed = 0;
    Weighting weighting = Weighting::uniform;

    /// Degeneration knobs. The fedlmt preset is fedmud with both set and
    /// reset_interval >= rounds.
    bool zero_compressed_base = false;
    bool random_v_init = false;

    /// Accounting only; arithmetic is always f64.
    std::size_t bytes_per_scalar = 8;
    std::size_t parallel_clients = 1;
    bool diagnostics = false;
    /// Record full-shard loss before training and after every local epoch.
    bool track_shard_loss = false;
};

/// Every violated invariant, empty when the config is valid.
std::vector<std::string> validation_errors(const FedConfig& config);
/// Throws ConfigError listing validation_errors().
void validate(const FedConfig& config);

/// Seed streams. All randomness in a run derives from global_seed through
/// these.
std::uint64_t base_weight_seed(std::uint64_t global_seed);
/// Seed used to (re)initialize updates after round t; t = 0 is the initial draw.
std::uint64_t round_seed(std::uint64_t global_seed, std::size_t round);
std::uint64_t sampling_seed(std::uint64_t global_seed, std::size_t round);
std::uint64_t client_seed(std::uint64_t global_seed, std::size_t round, std::size_t client);

/// C distinct client ids in ascending order.
std::vector<std::size_t> sample_clients(std::size_t clients, std::size_t participants, std::uint64_t seed);

/// The round-0 global model for a config.
model::Model initial_model(const FedConfig& config, std::span<const model::LayerSpec> specs);

struct ClientUpdate {
    std::vector<std::optional<decomp::UpdateParam>> updates;  // per layer
    std::vector<Matrix> biases;                               // per layer
    std::size_t sample_count = 0;
    /// Mean minibatch loss over the final local epoch.
    double train_loss = 0.0;
    /// Filled when track_shard_loss is set: loss on the whole shard before
    /// training and after each epoch.
    std::vector<double> shard_losses;
};

using StepObserver = std::function<void(const model::Model& local)>;

/// Runs local_epochs epochs of minibatch SGD on a private copy of the
/// broadcast model. The shard is reshuffled each epoch from `seed`.
ClientUpdate client_update(const model::Model& global, const data::Dataset& shard, const FedConfig& config,
                           std::uint64_t seed, const StepObserver& on_step = {});

struct CommunicationCost {
    std::uint64_t uplink_per_client = 0;
    std::uint64_t downlink = 0;
    std::uint64_t seed_bytes = 0;
    std::vector<std::uint64_t> layer_weight_bytes;  // trainable weight traffic
    std::vector<std::uint64_t> layer_dense_bytes;   // what the layer would cost uncompressed
    std::vector<std::uint64_t> layer_bias_bytes;
};

/// Per-round traffic for a model. Fixed factors and base weights cost
/// nothing recurring; one 8-byte seed rides the downlink whenever any layer
/// needs seed-shared initialization.
CommunicationCost account_communication(const FedConfig& config, const model::Model& model);

struct RunHooks {
    /// After aggregation, before any merge.
    std::function<void(std::size_t round, const model::Model& global)> before_merge;
    /// After merge and evaluation.
    std::function<void(std::size_t round, const model::Model& global)> after_round;
    /// After every local SGD step. Called concurrently when parallel_clients > 1.
    std::function<void(std::size_t round, std::size_t client, const model::Model& local)> after_client_step;
    /// Fixed-factor checksum of each participant's broadcast copy.
    std::function<void(std::size_t round, std::size_t client, std::uint64_t fixed_checksum)> on_broadcast;
    /// Each finished report, in round order.
    std::function<void(const RoundReport& report)> on_report;
};

struct RunResult {
    std::vector<RoundReport> reports;
    model::Model final_model;
};

/// The round loop: sample, train locally, aggregate in ascending client id,
/// merge every reset_interval rounds, evaluate on the held-out test set.
/// `partition` indexes into `train`.
RunResult run(const FedConfig& config, std::span<const model::LayerSpec> specs, const data::Dataset& train,
              const data::Dataset& test, const data::Partition& partition, const RunHooks& hooks = {},
              metrics::MetricsSink* sink = nullptr);

}  // namespace fllab::federation
