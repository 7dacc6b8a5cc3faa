#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace fllab {

/// Per-round record produced by the round engine.
struct RoundReport {
    std::size_t round = 0;
    double train_loss = 0.0;
    double test_loss = 0.0;
    double test_acc = 0.0;
    /// Headline traffic: participants only.
    std::uint64_t uplink_bytes = 0;
    std::uint64_t downlink_bytes = 0;
    /// Downlink owed to non-participants so they can keep their copy current.
    /// Reported separately, never folded into the headline numbers.
    std::uint64_t catchup_bytes = 0;
    bool merged = false;

    std::vector<double> u_norms;  // per layer, 0 for layers without factors
    std::vector<double> v_norms;
    double u_norm_max = 0.0;
    double v_norm_max = 0.0;
    /// NaN when singular-value diagnostics are off or nothing qualified.
    double sigma_min_min = std::numeric_limits<double>::quiet_NaN();
    /// Factors too large for the singular-value diagnostic this round.
    std::size_t sigma_skipped = 0;
};

}  // namespace fllab
