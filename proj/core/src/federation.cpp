#include "fllab/federation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "fllab/error.hpp"
#include "fllab/metrics.hpp"

namespace fllab::federation {

namespace {

constexpr std::uint64_t kTagBase = 0x42415345ULL;    // "BASE"
constexpr std::uint64_t kTagRound = 0x524F554EULL;   // "ROUN"
constexpr std::uint64_t kTagSample = 0x53414D50ULL;  // "SAMP"
constexpr std::uint64_t kTagClient = 0x434C4945ULL;  // "CLIE"

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), src.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto s = src.row(rows[i]);
        std::copy(s.begin(), s.end(), out.row(i).begin());
    }
    return out;
}

double shard_loss(const model::Model& m, const data::Dataset& shard) {
    return model::cross_entropy(model::forward(m, shard.features).logits, shard.labels);
}

}  // namespace

std::vector<std::string> validation_errors(const FedConfig& c) {
    std::vector<std::string> errs;
    if (c.rounds < 1) errs.emplace_back("rounds must be >= 1");
    if (c.clients < 1) errs.emplace_back("clients must be >= 1");
    if (c.participants < 1 || c.participants > c.clients) errs.emplace_back("participants must be in [1, clients]");
    if (c.local_epochs < 1) errs.emplace_back("local_epochs must be >= 1");
    if (c.batch_size < 1) errs.emplace_back("batch_size must be >= 1");
    if (!(c.lr > 0.0) || !std::isfinite(c.lr)) errs.emplace_back("lr must be a positive finite number");
    if (c.reset_interval < 1) errs.emplace_back("reset_interval must be >= 1");
    if (!(c.ratio > 0.0 && c.ratio <= 1.0)) errs.emplace_back("ratio must be in (0, 1]");
    if (!(c.init_bound >= 0.0) || !std::isfinite(c.init_bound)) errs.emplace_back("init_bound must be >= 0");
    if (c.bytes_per_scalar != 4 && c.bytes_per_scalar != 8) errs.emplace_back("bytes_per_scalar must be 4 or 8");
    if (c.parallel_clients < 1) errs.emplace_back("parallel_clients must be >= 1");
    return errs;
}

void validate(const FedConfig& config) {
    auto errs = validation_errors(config);
    if (!errs.empty()) throw ConfigError(std::move(errs));
}

std::uint64_t base_weight_seed(std::uint64_t global_seed) { return derive_seed(global_seed, kTagBase); }

std::uint64_t round_seed(std::uint64_t global_seed, std::size_t round) {
    return derive_seed(global_seed, kTagRound, round);
}

std::uint64_t sampling_seed(std::uint64_t global_seed, std::size_t round) {
    return derive_seed(global_seed, kTagSample, round);
}

std::uint64_t client_seed(std::uint64_t global_seed, std::size_t round, std::size_t client) {
    return derive_seed(derive_seed(global_seed, kTagClient, round), client);
}

std::vector<std::size_t> sample_clients(std::size_t clients, std::size_t participants, std::uint64_t seed) {
    if (participants > clients) throw ConfigError({"participants exceed clients"});
    std::vector<std::size_t> ids(clients);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = 0; i < participants; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(clients - i));
        std::swap(ids[i], ids[j]);
    }
    ids.resize(participants);
    std::sort(ids.begin(), ids.end());
    return ids;
}

model::Model initial_model(const FedConfig& config, std::span<const model::LayerSpec> specs) {
    model::BuildOptions opts;
    opts.base_seed = base_weight_seed(config.global_seed);
    opts.update_seed = round_seed(config.global_seed, 0);
    opts.zero_compressed_base = config.zero_compressed_base;
    opts.init_mode = config.random_v_init ? decomp::InitMode::all_random : decomp::InitMode::zero_start;
    return model::build_model(specs, opts);
}

ClientUpdate client_update(const model::Model& global, const data::Dataset& shard, const FedConfig& config,
                           std::uint64_t seed, const StepObserver& on_step) {
    if (shard.size() == 0) throw ShapeError("client_update: empty shard");
    model::Model local = global;
    Rng rng(seed);
    ClientUpdate out;
    out.sample_count = shard.size();

    if (config.track_shard_loss) out.shard_losses.push_back(shard_loss(local, shard));

    std::vector<std::size_t> order(shard.size());
    std::vector<Label> batch_labels;
    for (std::size_t epoch = 0; epoch < config.local_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            const std::span<const std::size_t> rows(order.data() + begin, end - begin);
            const Matrix batch = gather_rows(shard.features, rows);
            batch_labels.clear();
            for (std::size_t r : rows) batch_labels.push_back(shard.labels[r]);

            auto lg = model::loss_and_backward(local, batch, batch_labels);
            if (!std::isfinite(lg.loss)) throw Error("local training diverged (non-finite loss)");
            model::sgd_step(local, lg.grads, config.lr);
            if (on_step) on_step(local);
            loss_sum += lg.loss;
            ++batches;
        }
        out.train_loss = loss_sum / static_cast<double>(batches);
        if (config.track_shard_loss) out.shard_losses.push_back(shard_loss(local, shard));
    }

    for (auto& layer : local.layers) {
        out.updates.push_back(std::move(layer.update));
        out.biases.push_back(std::move(layer.bias));
    }
    return out;
}

CommunicationCost account_communication(const FedConfig& config, const model::Model& model) {
    CommunicationCost cost;
    const std::uint64_t bps = config.bytes_per_scalar;
    bool needs_seed = false;
    for (const auto& layer : model.layers) {
        const std::uint64_t dense = layer.weight_base.size() * bps;
        const std::uint64_t weight = layer.update ? decomp::param_count(*layer.update) * bps : 0;
        const std::uint64_t bias = layer.bias.size() * bps;
        cost.layer_weight_bytes.push_back(weight);
        cost.layer_dense_bytes.push_back(dense);
        cost.layer_bias_bytes.push_back(bias);
        cost.uplink_per_client += weight + bias;
        if (layer.update && layer.update->kind() != decomp::UpdateKind::dense) needs_seed = true;
    }
    cost.seed_bytes = needs_seed ? sizeof(std::uint64_t) : 0;
    cost.downlink = cost.uplink_per_client + cost.seed_bytes;
    return cost;
}

RunResult run(const FedConfig& config, std::span<const model::LayerSpec> specs, const data::Dataset& train,
              const data::Dataset& test, const data::Partition& partition, const RunHooks& hooks,
              metrics::MetricsSink* sink) {
    validate(config);
    if (partition.clients() != config.clients) {
        throw ConfigError({"partition has " + std::to_string(partition.clients()) + " clients, config expects " +
                           std::to_string(config.clients)});
    }
    data::validate_partition(partition, train.size());

    std::vector<data::Dataset> shards;
    shards.reserve(partition.clients());
    for (const auto& idx : partition.client_indices) shards.push_back(data::subset(train, idx));

    RunResult result;
    model::Model global = initial_model(config, specs);
    const CommunicationCost cost = account_communication(config, global);

    for (std::size_t t = 1; t <= config.rounds; ++t) {
        const auto ids = sample_clients(config.clients, config.participants, sampling_seed(config.global_seed, t));

        if (hooks.on_broadcast) {
            for (std::size_t id : ids) {
                std::uint64_t h = 0xCBF29CE484222325ULL;
                for (const auto& layer : global.layers)
                    if (layer.update) h = checksum_combine(h, decomp::fixed_checksum(*layer.update));
                hooks.on_broadcast(t, id, h);
            }
        }

        std::vector<ClientUpdate> results(ids.size());
        auto train_one = [&](std::size_t slot) {
            const std::size_t id = ids[slot];
            StepObserver observer;
            if (hooks.after_client_step) {
                observer = [&, id](const model::Model& local) { hooks.after_client_step(t, id, local); };
            }
            results[slot] =
                client_update(global, shards[id], config, client_seed(config.global_seed, t, id), observer);
        };
        const std::size_t workers = std::min(config.parallel_clients, ids.size());
        if (workers <= 1) {
            for (std::size_t s = 0; s < ids.size(); ++s) train_one(s);
        } else {
            std::vector<std::exception_ptr> errors(workers);
            {
                std::vector<std::jthread> pool;
                for (std::size_t w = 0; w < workers; ++w) {
                    pool.emplace_back([&, w] {
                        try {
                            for (std::size_t s = w; s < ids.size(); s += workers) train_one(s);
                        } catch (...) {
                            errors[w] = std::current_exception();
                        }
                    });
                }
            }
            for (auto& e : errors)
                if (e) std::rethrow_exception(e);
        }

        // Reduction in ascending client id, independent of scheduling.
        std::vector<double> weights;
        if (config.weighting == Weighting::by_samples) {
            for (const auto& r : results) weights.push_back(static_cast<double>(r.sample_count));
        }
        for (std::size_t li = 0; li < global.layers.size(); ++li) {
            auto& layer = global.layers[li];
            std::vector<Matrix> biases;
            biases.reserve(results.size());
            for (const auto& r : results) biases.push_back(r.biases[li]);
            layer.bias = weights.empty() ? mean(biases) : weighted_mean(biases, weights);
            if (!layer.update) continue;
            std::vector<decomp::UpdateParam> ups;
            ups.reserve(results.size());
            for (auto& r : results) ups.push_back(std::move(*r.updates[li]));
            layer.update = decomp::aggregate(ups, weights);
        }

        RoundReport report;
        report.round = t;
        double train_loss = 0.0;
        for (const auto& r : results) train_loss += r.train_loss;
        report.train_loss = train_loss / static_cast<double>(results.size());

        const auto norms = metrics::factor_norms(global);
        report.u_norms = norms.u;
        report.v_norms = norms.v;
        report.u_norm_max = norms.u.empty() ? 0.0 : *std::max_element(norms.u.begin(), norms.u.end());
        report.v_norm_max = norms.v.empty() ? 0.0 : *std::max_element(norms.v.begin(), norms.v.end());
        if (config.diagnostics) report.sigma_min_min = metrics::sigma_min_over_factors(global, &report.sigma_skipped);

        if (hooks.before_merge) hooks.before_merge(t, global);
        report.merged = t % config.reset_interval == 0;
        if (report.merged) model::merge_updates(global, round_seed(config.global_seed, t));

        const auto eval = metrics::evaluate(global, test.features, test.labels);
        report.test_loss = eval.loss;
        report.test_acc = eval.accuracy;
        if (!std::isfinite(report.test_loss)) throw Error("global model diverged at round " + std::to_string(t));

        const std::uint64_t c = ids.size();
        report.uplink_bytes = c * cost.uplink_per_client;
        report.downlink_bytes = c * cost.downlink;
        report.catchup_bytes = (config.clients - c) * cost.downlink;

        if (hooks.after_round) hooks.after_round(t, global);
        if (sink) sink->write_round(report);
        if (hooks.on_report) hooks.on_report(report);
        result.reports.push_back(std::move(report));
    }
    result.final_model = std::move(global);
    return result;
}

}  // namespace fllab::federation
