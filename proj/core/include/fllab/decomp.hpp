#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "fllab/linalg.hpp"
#include "fllab/rng.hpp"

namespace fllab::decomp {

/// How a layer's model update is parameterized. The update always targets an
/// (m, n) matrix that is added to a frozen base weight.
enum class UpdateKind {
    dense,            ///< dW trained directly
    low_rank,         ///< U V^T
    low_rank_aad,     ///< U Vf^T + Uf V^T, Uf and Vf fixed
    frozen_low_rank,  ///< Uf V^T, Uf fixed
    bkd,              ///< k x k grid of kron(U_pq, V_pq), truncated to (m, n)
    bkd_aad,          ///< grid of kron(U, Vf) + kron(Uf, V)
};

std::string_view to_string(UpdateKind kind) noexcept;
std::optional<UpdateKind> parse_update_kind(std::string_view name) noexcept;

bool is_bkd(UpdateKind kind) noexcept;
bool is_low_rank(UpdateKind kind) noexcept;
/// True for the kinds whose recovered matrix is linear in the trainables.
bool is_linear(UpdateKind kind) noexcept;

struct LowRankShape {
    std::size_t m = 0;
    std::size_t n = 0;
    std::size_t r = 0;
};

/// Block-wise Kronecker layout: k*k blocks, each the Kronecker product of two
/// z x z factors, assembled into a (k z^2) square and truncated to (m, n).
struct BkdShape {
    std::size_t m = 0;
    std::size_t n = 0;
    std::size_t k = 0;
    std::size_t z = 0;
    /// Set when even k = 1 exceeds the requested parameter budget.
    bool over_budget = false;

    std::size_t side() const noexcept { return k * z * z; }
    friend bool operator==(const BkdShape&, const BkdShape&) = default;
};

/// Smallest z with k^2 z^4 >= m n, i.e. ceil((m n / k^2)^(1/4)) in exact
/// integer arithmetic.
std::size_t bkd_side_for(std::size_t m, std::size_t n, std::size_t k);

/// Largest r >= 1 with 2 (m + n) r <= ratio m n, clamped to [1, min(m, n)].
std::size_t rank_for_ratio(std::size_t m, std::size_t n, double ratio);

/// Largest k whose trainable count 2 k^2 z^2 fits ratio m n. Falls back to
/// k = 1 with over_budget set when nothing fits.
BkdShape blocks_for_ratio(std::size_t m, std::size_t n, double ratio);

/// Makes a BKD shape for an explicit block count.
BkdShape bkd_shape(std::size_t m, std::size_t n, std::size_t k);

/// Rank of the trainable V for the frozen variant so that n r_F is the
/// integer nearest (m + n) r, ties rounded up, clamped to [1, min(m, n)].
std::size_t frozen_rank_for(std::size_t m, std::size_t n, std::size_t r);

/// 2 (m + n) r / (m n): the low-rank ratio counting both factors in both
/// directions of traffic.
double low_rank_nominal_ratio(std::size_t m, std::size_t n, std::size_t r);
/// 2 k^2 z^2 / (m n).
double bkd_nominal_ratio(const BkdShape& shape);

struct DenseUpdate {
    Matrix delta;
};

struct LowRankUpdate {
    Matrix u;  // (m, r)
    Matrix v;  // (n, r)
};

struct LowRankAadUpdate {
    Matrix u;
    Matrix v;
    Matrix u_fixed;
    Matrix v_fixed;
};

struct FrozenLowRankUpdate {
    Matrix u_fixed;
    Matrix v;
};

/// Blocks are stored row-major over the grid: block (p, q) at index p k + q.
struct BkdUpdate {
    BkdShape shape;
    std::vector<Matrix> u;
    std::vector<Matrix> v;
};

struct BkdAadUpdate {
    BkdShape shape;
    std::vector<Matrix> u;
    std::vector<Matrix> v;
    std::vector<Matrix> u_fixed;
    std::vector<Matrix> v_fixed;
};

/// Everything needed to (re)create an update of a given layout.
struct UpdateShape {
    UpdateKind kind = UpdateKind::dense;
    std::size_t m = 0;
    std::size_t n = 0;
    std::size_t rank = 0;  // low-rank kinds only
    BkdShape bkd{};        // bkd kinds only

    static UpdateShape dense(std::size_t m, std::size_t n);
    static UpdateShape low_rank(UpdateKind kind, std::size_t m, std::size_t n, std::size_t r);
    static UpdateShape block_kron(UpdateKind kind, const BkdShape& shape);

    friend bool operator==(const UpdateShape&, const UpdateShape&) = default;
};

class UpdateParam {
public:
    using Variant = std::variant<DenseUpdate, LowRankUpdate, LowRankAadUpdate, FrozenLowRankUpdate,
                                 BkdUpdate, BkdAadUpdate>;

    template <typename T>
        requires std::is_constructible_v<Variant, T&&> && (!std::is_same_v<std::decay_t<T>, UpdateParam>)
    UpdateParam(T&& v) : value_(std::forward<T>(v)) {}  // NOLINT(google-explicit-constructor)

    UpdateKind kind() const noexcept;
    std::size_t rows() const noexcept;
    std::size_t cols() const noexcept;

    Variant& value() noexcept { return value_; }
    const Variant& value() const noexcept { return value_; }

    template <typename T>
    T& as() { return std::get<T>(value_); }
    template <typename T>
    const T& as() const { return std::get<T>(value_); }

private:
    Variant value_;
};

UpdateShape shape_of(const UpdateParam& u);

/// Gradient w.r.t. the trainable matrices, in the order of trainables().
struct UpdateGrad {
    std::vector<Matrix> parts;
};

enum class InitMode {
    /// Randomize U (or the fixed pair for AAD), zero the rest: the recovered
    /// update starts at exactly zero.
    zero_start,
    /// Randomize every trainable factor as well. Only used for the
    /// pre-decomposed (FedLMT-style) degeneration at round 0.
    all_random,
};

/// Draws from rng in a fixed order: per factor, row-major; BKD grids block by
/// block. Dense ignores rng.
UpdateParam init_update(const UpdateShape& shape, double bound, Rng& rng,
                        InitMode mode = InitMode::zero_start);

/// The recovered (m, n) update.
Matrix materialize(const UpdateParam& u);

/// Routes dL/dW (m, n) to the trainable factors.
UpdateGrad grad(const UpdateParam& u, const Matrix& d_weight);

std::vector<Matrix*> trainables(UpdateParam& u);
std::vector<const Matrix*> trainables(const UpdateParam& u);
/// Seed-regenerated matrices that never change during local training.
std::vector<const Matrix*> fixed_parts(const UpdateParam& u);
std::uint64_t fixed_checksum(const UpdateParam& u);

/// trainable -= lr * grad
void apply_gradient(UpdateParam& u, const UpdateGrad& g, double lr);

/// Elementwise (optionally weighted) mean of every trainable matrix, reduced
/// in list order. Fixed matrices must be bitwise identical across the list
/// and are carried through.
UpdateParam aggregate(std::span<const UpdateParam> updates, std::span<const double> weights = {});

/// Trainable scalars only; fixed matrices travel as a seed.
std::size_t param_count(const UpdateParam& u);
std::size_t param_count(const UpdateShape& shape);
double compression_ratio(const UpdateParam& u);

}  // namespace fllab::decomp
