#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fllab/linalg.hpp"
#include "fllab/model.hpp"
#include "fllab/report.hpp"
#include "fllab/types.hpp"

namespace fllab::metrics {

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// Mean cross-entropy and top-1 accuracy (ties go to the lowest class id).
Evaluation evaluate(const model::Model& model, const Matrix& features, std::span<const Label> labels);

/// Largest dimension accepted by sigma_min_diag.
inline constexpr std::size_t kSigmaMaxDim = 64;

/// Smallest singular value from the eigenvalues of the smaller Gram matrix,
/// found by cyclic Jacobi rotations. nullopt when either dimension exceeds
/// kSigmaMaxDim.
std::optional<double> sigma_min_diag(const Matrix& m);

/// Symmetric eigenvalues by cyclic Jacobi, ascending.
std::vector<double> jacobi_eigenvalues(Matrix sym, double tol = 1e-12, int max_sweeps = 100);

struct FactorNorms {
    std::vector<double> u;
    std::vector<double> v;
};

/// Frobenius norms of each layer's U-side and V-side factors (BKD: over all
/// blocks). Dense and absent updates report 0.
FactorNorms factor_norms(const model::Model& model);

/// Minimum sigma_min over every low-rank factor and BKD block small enough
/// for sigma_min_diag; NaN when none qualify. Factors over the size cap are
/// skipped and counted in `skipped` when given.
double sigma_min_over_factors(const model::Model& model, std::size_t* skipped = nullptr);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

inline constexpr std::string_view kCsvHeader =
    "round,train_loss,test_loss,test_acc,uplink_bytes,downlink_bytes,merged,u_norm_max,v_norm_max,sigma_min_min";

std::string csv_row(const RoundReport& r);

/// Append-only CSV writer. The header is written on open and every row is
/// flushed as it is written.
class MetricsSink {
public:
    explicit MetricsSink(std::filesystem::path path);
    MetricsSink(const MetricsSink&) = delete;
    MetricsSink& operator=(const MetricsSink&) = delete;

    void write_round(const RoundReport& report);
    void finalize();

    std::size_t rows_written() const noexcept { return rows_; }
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::size_t rows_ = 0;
    std::size_t last_round_ = 0;
};

}  // namespace fllab::metrics
