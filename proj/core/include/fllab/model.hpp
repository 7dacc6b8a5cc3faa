#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fllab/decomp.hpp"
#include "fllab/linalg.hpp"
#include "fllab/types.hpp"

namespace fllab::model {

enum class Activation { relu, none };

/// Per-layer update parameterization. `ratio` sizes the update unless an
/// explicit rank or block count is given.
struct Compression {
    decomp::UpdateKind scheme = decomp::UpdateKind::dense;
    double ratio = 1.0;
    double init_bound = 0.1;
    std::optional<std::size_t> rank;
    std::optional<std::size_t> blocks;
};

/// A layer with no compression carries no update at all: its base weight
/// stays frozen and only the bias trains. Trainable full-rank layers use
/// the dense scheme.
struct LayerSpec {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    Activation activation = Activation::relu;
    std::optional<Compression> compression;
};

/// Update layout for a layer spec; nullopt for uncompressed layers.
/// Low-rank kinds get rank_for_ratio, frozen_low_rank gets the
/// trainable-count-equalized frozen_rank_for, BKD kinds blocks_for_ratio.
std::optional<decomp::UpdateShape> resolve_update_shape(const LayerSpec& spec);

struct Layer {
    Matrix weight_base;  // (out, in), frozen during local training
    Matrix bias;         // (1, out)
    Activation activation = Activation::relu;
    std::optional<decomp::UpdateParam> update;
    std::optional<decomp::UpdateShape> update_shape;
    double init_bound = 0.0;

    bool compressed() const noexcept {
        return update_shape && update_shape->kind != decomp::UpdateKind::dense;
    }
};

struct Model {
    std::vector<Layer> layers;

    std::size_t input_dim() const { return layers.front().weight_base.cols(); }
    std::size_t output_dim() const { return layers.back().weight_base.rows(); }
};

struct BuildOptions {
    /// Base weights drawn uniform(-1/sqrt(in), 1/sqrt(in)) from this seed.
    std::uint64_t base_seed = 0;
    /// Seed for the round-0 update initialization.
    std::uint64_t update_seed = 0;
    /// Zero the base weight of every compressed (non-dense) layer.
    bool zero_compressed_base = false;
    decomp::InitMode init_mode = decomp::InitMode::zero_start;
};

Model build_model(std::span<const LayerSpec> specs, const BuildOptions& options);

/// W_base + materialize(update), or W_base when there is no update.
Matrix effective_weight(const Layer& layer);

struct ForwardCache {
    std::vector<Matrix> inputs;           // input to each layer
    std::vector<Matrix> pre_activations;  // affine output of each layer
    std::vector<Matrix> weights;          // effective weight used
};

struct ForwardResult {
    Matrix logits;
    ForwardCache cache;
};

ForwardResult forward(const Model& model, const Matrix& batch);

/// Mean softmax cross-entropy, computed with a max-shifted log-sum-exp.
double cross_entropy(const Matrix& logits, std::span<const Label> labels);

struct LayerGrad {
    Matrix bias;
    std::optional<decomp::UpdateGrad> update;
};

struct Gradients {
    std::vector<LayerGrad> layers;
};

struct LossAndGrad {
    double loss = 0.0;
    Gradients grads;
};

/// dL/dW on each effective weight is formed by ordinary backprop and then
/// routed through decomp::grad. Base weights receive nothing.
LossAndGrad loss_and_backward(const Model& model, const Matrix& batch, std::span<const Label> labels);

/// trainable -= lr * grad. Base weights and fixed factors are untouched.
void sgd_step(Model& model, const Gradients& grads, double lr);

/// Re-initializes every update from per-layer streams of `seed`.
void reset_updates(Model& model, std::uint64_t seed, decomp::InitMode mode = decomp::InitMode::zero_start);

/// Folds each update into its base weight and starts a fresh zero update
/// from `fresh_seed`. Effective weights are unchanged.
void merge_updates(Model& model, std::uint64_t fresh_seed);

std::uint64_t base_checksum(const Model& model);
/// Checksum of every stored value: bases, biases, trainable and fixed factors.
std::uint64_t model_checksum(const Model& model);

}  // namespace fllab::model
