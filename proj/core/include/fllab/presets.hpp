#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "fllab/decomp.hpp"
#include "fllab/federation.hpp"
#include "fllab/model.hpp"

namespace fllab::federation {

std::string_view to_string(Method method) noexcept;
std::optional<Method> parse_method(std::string_view name) noexcept;
std::string_view to_string(Weighting w) noexcept;
std::optional<Weighting> parse_weighting(std::string_view name) noexcept;

inline constexpr Method kAllMethods[] = {Method::fedavg,     Method::fedlmt,         Method::fedmud,
                                         Method::fedmud_bkd, Method::fedmud_aad,     Method::fedmud_bkd_aad,
                                         Method::fedmud_f};

/// Update scheme applied to the inner (compressed) layers.
decomp::UpdateKind inner_scheme(Method method) noexcept;

/// Method-implied settings. fedlmt becomes the fedmud degeneration: zeroed
/// compressed bases, all-random round-0 factors, reset_interval >= rounds.
/// Other methods pass through unchanged.
FedConfig apply_preset(FedConfig config);

struct Architecture {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden;
    std::size_t classes = 0;
};

/// Optional per-method size overrides for inner layers.
struct SizeOverrides {
    std::optional<std::size_t> rank;
    std::optional<std::size_t> blocks;
};

/// ReLU MLP. First and last layers train a dense update; inner layers use
/// inner_scheme(method) at config.ratio. fedavg makes every layer dense.
std::vector<model::LayerSpec> preset_layers(const FedConfig& config, const Architecture& arch,
                                            const SizeOverrides& overrides = {});

}  // namespace fllab::federation
