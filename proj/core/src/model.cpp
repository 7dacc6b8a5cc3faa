#include "fllab/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fllab/error.hpp"

namespace fllab::model {

namespace {

constexpr std::uint64_t kLayerStreamTag = 0x4C41594552ULL;  // "LAYER"

void add_bias_rows(Matrix& out, const Matrix& bias) {
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias(0, c);
    }
}

void relu_inplace(Matrix& m) {
    for (double& v : m.data()) v = v > 0.0 ? v : 0.0;
}

}  // namespace

std::optional<decomp::UpdateShape> resolve_update_shape(const LayerSpec& spec) {
    if (!spec.compression) return std::nullopt;
    const Compression& c = *spec.compression;
    const std::size_t m = spec.out_dim;
    const std::size_t n = spec.in_dim;
    using decomp::UpdateKind;
    switch (c.scheme) {
    case UpdateKind::dense:
        return decomp::UpdateShape::dense(m, n);
    case UpdateKind::low_rank:
    case UpdateKind::low_rank_aad:
        return decomp::UpdateShape::low_rank(c.scheme, m, n, c.rank.value_or(decomp::rank_for_ratio(m, n, c.ratio)));
    case UpdateKind::frozen_low_rank: {
        const std::size_t r =
            c.rank.value_or(decomp::frozen_rank_for(m, n, decomp::rank_for_ratio(m, n, c.ratio)));
        return decomp::UpdateShape::low_rank(c.scheme, m, n, r);
    }
    case UpdateKind::bkd:
    case UpdateKind::bkd_aad: {
        const decomp::BkdShape s =
            c.blocks ? decomp::bkd_shape(m, n, *c.blocks) : decomp::blocks_for_ratio(m, n, c.ratio);
        return decomp::UpdateShape::block_kron(c.scheme, s);
    }
    }
    return std::nullopt;
}

Model build_model(std::span<const LayerSpec> specs, const BuildOptions& options) {
    if (specs.empty()) throw ShapeError("build_model: no layers");
    Model model;
    Rng base_rng(options.base_seed);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const LayerSpec& spec = specs[i];
        if (i > 0 && specs[i - 1].out_dim != spec.in_dim) {
            throw ShapeError("build_model: layer " + std::to_string(i) + " input does not match previous output");
        }
        Layer layer;
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.in_dim));
        layer.weight_base = fill_uniform(spec.out_dim, spec.in_dim, bound, base_rng);
        layer.bias = Matrix(1, spec.out_dim);
        layer.activation = spec.activation;
        layer.update_shape = resolve_update_shape(spec);
        if (spec.compression) layer.init_bound = spec.compression->init_bound;
        if (options.zero_compressed_base && layer.compressed()) {
            layer.weight_base = Matrix(spec.out_dim, spec.in_dim);
        }
        model.layers.push_back(std::move(layer));
    }
    reset_updates(model, options.update_seed, options.init_mode);
    return model;
}

Matrix effective_weight(const Layer& layer) {
    if (!layer.update) return layer.weight_base;
    Matrix w = layer.weight_base;
    axpy_inplace(w, decomp::materialize(*layer.update), 1.0);
    return w;
}

ForwardResult forward(const Model& model, const Matrix& batch) {
    if (batch.cols() != model.input_dim()) {
        throw ShapeError("forward: batch width " + std::to_string(batch.cols()) + " but model expects " +
                         std::to_string(model.input_dim()));
    }
    ForwardResult out;
    out.cache.inputs.reserve(model.layers.size());
    Matrix h = batch;
    for (const Layer& layer : model.layers) {
        Matrix w = effective_weight(layer);
        Matrix a = matmul_nt(h, w);
        add_bias_rows(a, layer.bias);
        out.cache.inputs.push_back(std::move(h));
        out.cache.weights.push_back(std::move(w));
        h = a;
        if (layer.activation == Activation::relu) relu_inplace(h);
        out.cache.pre_activations.push_back(std::move(a));
    }
    out.logits = std::move(h);
    return out;
}

double cross_entropy(const Matrix& logits, std::span<const Label> labels) {
    if (logits.rows() != labels.size()) throw ShapeError("cross_entropy: label count mismatch");
    double total = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto row = logits.row(r);
        if (labels[r] >= row.size()) throw ShapeError("cross_entropy: label out of range");
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - mx);
        total += (std::log(sum) + mx) - row[labels[r]];
    }
    return total / static_cast<double>(logits.rows());
}

LossAndGrad loss_and_backward(const Model& model, const Matrix& batch, std::span<const Label> labels) {
    if (batch.empty() || batch.rows() == 0) throw ShapeError("loss_and_backward: empty batch");
    if (labels.size() != batch.rows()) throw ShapeError("loss_and_backward: label count mismatch");

    ForwardResult fw = forward(model, batch);
    LossAndGrad result;
    result.loss = cross_entropy(fw.logits, labels);

    // d loss / d logits = (softmax - onehot) / B
    const double inv_b = 1.0 / static_cast<double>(batch.rows());
    Matrix delta = fw.logits;
    for (std::size_t r = 0; r < delta.rows(); ++r) {
        auto row = delta.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (double& v : row) v = v / sum * inv_b;
        row[labels[r]] -= inv_b;
    }

    result.grads.layers.resize(model.layers.size());
    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const Layer& layer = model.layers[li];
        if (layer.activation == Activation::relu) {
            const Matrix& pre = fw.cache.pre_activations[li];
            auto d = delta.data();
            auto p = pre.data();
            for (std::size_t i = 0; i < d.size(); ++i)
                if (!(p[i] > 0.0)) d[i] = 0.0;
        }
        LayerGrad& lg = result.grads.layers[li];
        lg.bias = Matrix(1, layer.bias.cols());
        for (std::size_t r = 0; r < delta.rows(); ++r) {
            const auto row = delta.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) lg.bias(0, c) += row[c];
        }
        if (layer.update) {
            const Matrix d_weight = matmul_tn(delta, fw.cache.inputs[li]);
            lg.update = decomp::grad(*layer.update, d_weight);
        }
        if (li > 0) delta = matmul(delta, fw.cache.weights[li]);
    }
    return result;
}

void sgd_step(Model& model, const Gradients& grads, double lr) {
    if (grads.layers.size() != model.layers.size()) throw ShapeError("sgd_step: gradient layer count mismatch");
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        Layer& layer = model.layers[li];
        const LayerGrad& g = grads.layers[li];
        axpy_inplace(layer.bias, g.bias, -lr);
        if (layer.update) {
            if (!g.update) throw ShapeError("sgd_step: missing update gradient");
            decomp::apply_gradient(*layer.update, *g.update, lr);
        }
    }
}

void reset_updates(Model& model, std::uint64_t seed, decomp::InitMode mode) {
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        Layer& layer = model.layers[li];
        if (!layer.update_shape) {
            layer.update.reset();
            continue;
        }
        Rng rng(derive_seed(seed, kLayerStreamTag, li));
        layer.update = decomp::init_update(*layer.update_shape, layer.init_bound, rng, mode);
    }
}

void merge_updates(Model& model, std::uint64_t fresh_seed) {
    for (Layer& layer : model.layers) {
        if (layer.update) axpy_inplace(layer.weight_base, decomp::materialize(*layer.update), 1.0);
    }
    reset_updates(model, fresh_seed, decomp::InitMode::zero_start);
}

std::uint64_t base_checksum(const Model& model) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const Layer& layer : model.layers) h = checksum_combine(h, checksum(layer.weight_base));
    return h;
}

std::uint64_t model_checksum(const Model& model) {
    std::uint64_t h = base_checksum(model);
    for (const Layer& layer : model.layers) {
        h = checksum_combine(h, checksum(layer.bias));
        if (!layer.update) continue;
        for (const Matrix* m : decomp::trainables(*layer.update)) h = checksum_combine(h, checksum(*m));
        h = checksum_combine(h, decomp::fixed_checksum(*layer.update));
    }
    return h;
}

}  // namespace fllab::model
