#include "fllab/presets.hpp"

#include <algorithm>
#include <array>
#include <utility>

#include "fllab/error.hpp"

namespace fllab::federation {

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 7> kMethodNames{{
    {Method::fedavg, "fedavg"},
    {Method::fedlmt, "fedlmt"},
    {Method::fedmud, "fedmud"},
    {Method::fedmud_bkd, "fedmud_bkd"},
    {Method::fedmud_aad, "fedmud_aad"},
    {Method::fedmud_bkd_aad, "fedmud_bkd_aad"},
    {Method::fedmud_f, "fedmud_f"},
}};

}  // namespace

std::string_view to_string(Method method) noexcept {
    for (const auto& [m, name] : kMethodNames)
        if (m == method) return name;
    return "unknown";
}

std::optional<Method> parse_method(std::string_view name) noexcept {
    for (const auto& [m, n] : kMethodNames)
        if (n == name) return m;
    return std::nullopt;
}

std::string_view to_string(Weighting w) noexcept {
    return w == Weighting::uniform ? "uniform" : "by_samples";
}

std::optional<Weighting> parse_weighting(std::string_view name) noexcept {
    if (name == "uniform") return Weighting::uniform;
    if (name == "by_samples") return Weighting::by_samples;
    return std::nullopt;
}

decomp::UpdateKind inner_scheme(Method method) noexcept {
    using decomp::UpdateKind;
    switch (method) {
    case Method::fedavg:
        return UpdateKind::dense;
    case Method::fedlmt:
    case Method::fedmud:
        return UpdateKind::low_rank;
    case Method::fedmud_bkd:
        return UpdateKind::bkd;
    case Method::fedmud_aad:
        return UpdateKind::low_rank_aad;
    case Method::fedmud_bkd_aad:
        return UpdateKind::bkd_aad;
    case Method::fedmud_f:
        return UpdateKind::frozen_low_rank;
    }
    return UpdateKind::dense;
}

FedConfig apply_preset(FedConfig config) {
    if (config.method == Method::fedlmt) {
        config.zero_compressed_base = true;
        config.random_v_init = true;
        config.reset_interval = std::max(config.reset_interval, config.rounds);
    }
    return config;
}

std::vector<model::LayerSpec> preset_layers(const FedConfig& config, const Architecture& arch,
                                            const SizeOverrides& overrides) {
    if (arch.input_dim == 0 || arch.classes == 0) throw ShapeError("preset_layers: empty architecture");
    std::vector<std::size_t> dims{arch.input_dim};
    dims.insert(dims.end(), arch.hidden.begin(), arch.hidden.end());
    dims.push_back(arch.classes);

    std::vector<model::LayerSpec> specs;
    const std::size_t count = dims.size() - 1;
    for (std::size_t i = 0; i < count; ++i) {
        model::LayerSpec spec;
        spec.in_dim = dims[i];
        spec.out_dim = dims[i + 1];
        spec.activation = i + 1 == count ? model::Activation::none : model::Activation::relu;
        model::Compression c;
        c.ratio = config.ratio;
        c.init_bound = config.init_bound;
        const bool outer = i == 0 || i + 1 == count;
        c.scheme = outer ? decomp::UpdateKind::dense : inner_scheme(config.method);
        if (!outer) {
            c.rank = overrides.rank;
            c.blocks = overrides.blocks;
        }
        spec.compression = c;
        specs.push_back(spec);
    }
    return specs;
}

}  // namespace fllab::federation
