#include "fllab/decomp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "fllab/error.hpp"

namespace fllab::decomp {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::array<std::pair<UpdateKind, std::string_view>, 6> kKindNames{{
    {UpdateKind::dense, "dense"},
    {UpdateKind::low_rank, "lowrank"},
    {UpdateKind::low_rank_aad, "lowrank_aad"},
    {UpdateKind::frozen_low_rank, "frozen_lowrank"},
    {UpdateKind::bkd, "bkd"},
    {UpdateKind::bkd_aad, "bkd_aad"},
}};

// Checked (a^4 * b) >= target without overflow.
bool pow4_times_at_least(std::size_t z, std::size_t mult, std::size_t target) {
    long double v = static_cast<long double>(z);
    v = v * v * v * v * static_cast<long double>(mult);
    if (v < static_cast<long double>(target) * 0.5L) return false;
    if (v > static_cast<long double>(target) * 2.0L) return true;
    __extension__ const unsigned __int128 exact = static_cast<unsigned __int128>(z) * z * z * z * mult;
    return exact >= target;
}

// Block (p, q) of the (k z^2) square as a z^2 x z^2 view origin.
struct BlockOrigin {
    std::size_t row;
    std::size_t col;
};

BlockOrigin origin(const BkdShape& s, std::size_t block) {
    const std::size_t z2 = s.z * s.z;
    return {(block / s.k) * z2, (block % s.k) * z2};
}

// big += kron(a, b) placed at the block origin.
void add_kron_block(Matrix& big, BlockOrigin o, const Matrix& a, const Matrix& b) {
    const std::size_t z = a.rows();
    for (std::size_t p = 0; p < z; ++p)
        for (std::size_t q = 0; q < z; ++q) {
            const double apq = a(p, q);
            if (apq == 0.0) continue;
            for (std::size_t i = 0; i < z; ++i)
                for (std::size_t j = 0; j < z; ++j)
                    big(o.row + p * z + i, o.col + q * z + j) += apq * b(i, j);
        }
}

// For Y = A kron B in the block at o, with upstream dY:
//   dA[p,q] = sum_ij dY[pz+i, qz+j] B[i,j]
//   dB[i,j] = sum_pq dY[pz+i, qz+j] A[p,q]
Matrix kron_factor_grad_a(const Matrix& dy, BlockOrigin o, const Matrix& b) {
    const std::size_t z = b.rows();
    Matrix g(z, z);
    for (std::size_t p = 0; p < z; ++p)
        for (std::size_t q = 0; q < z; ++q) {
            double acc = 0.0;
            for (std::size_t i = 0; i < z; ++i)
                for (std::size_t j = 0; j < z; ++j) acc += dy(o.row + p * z + i, o.col + q * z + j) * b(i, j);
            g(p, q) = acc;
        }
    return g;
}

Matrix kron_factor_grad_b(const Matrix& dy, BlockOrigin o, const Matrix& a) {
    const std::size_t z = a.rows();
    Matrix g(z, z);
    for (std::size_t p = 0; p < z; ++p)
        for (std::size_t q = 0; q < z; ++q) {
            const double apq = a(p, q);
            if (apq == 0.0) continue;
            for (std::size_t i = 0; i < z; ++i)
                for (std::size_t j = 0; j < z; ++j) g(i, j) += dy(o.row + p * z + i, o.col + q * z + j) * apq;
        }
    return g;
}

void require_target(const UpdateParam& u, const Matrix& d_weight) {
    if (d_weight.rows() != u.rows() || d_weight.cols() != u.cols()) {
        throw ShapeError("grad: upstream gradient is " + std::to_string(d_weight.rows()) + "x" +
                         std::to_string(d_weight.cols()) + ", update targets " +
                         std::to_string(u.rows()) + "x" + std::to_string(u.cols()));
    }
}

}  // namespace

std::string_view to_string(UpdateKind kind) noexcept {
    for (const auto& [k, name] : kKindNames)
        if (k == kind) return name;
    return "unknown";
}

std::optional<UpdateKind> parse_update_kind(std::string_view name) noexcept {
    for (const auto& [k, n] : kKindNames)
        if (n == name) return k;
    return std::nullopt;
}

bool is_bkd(UpdateKind kind) noexcept {
    return kind == UpdateKind::bkd || kind == UpdateKind::bkd_aad;
}

bool is_low_rank(UpdateKind kind) noexcept {
    return kind == UpdateKind::low_rank || kind == UpdateKind::low_rank_aad ||
           kind == UpdateKind::frozen_low_rank;
}

bool is_linear(UpdateKind kind) noexcept {
    return kind == UpdateKind::dense || kind == UpdateKind::low_rank_aad ||
           kind == UpdateKind::frozen_low_rank || kind == UpdateKind::bkd_aad;
}

std::size_t bkd_side_for(std::size_t m, std::size_t n, std::size_t k) {
    if (m == 0 || n == 0 || k == 0) throw ShapeError("bkd_side_for: dimensions must be positive");
    const std::size_t target = m * n;
    const std::size_t k2 = k * k;
    auto z = static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(target) / static_cast<double>(k2), 0.25)));
    z = std::max<std::size_t>(z, 1);
    // Correct any floating-point slop in either direction.
    while (z > 1 && pow4_times_at_least(z - 1, k2, target)) --z;
    while (!pow4_times_at_least(z, k2, target)) ++z;
    return z;
}

std::size_t rank_for_ratio(std::size_t m, std::size_t n, double ratio) {
    if (m == 0 || n == 0) throw ShapeError("rank_for_ratio: dimensions must be positive");
    const double budget = ratio * static_cast<double>(m) * static_cast<double>(n);
    const double per_rank = 2.0 * static_cast<double>(m + n);
    auto r = static_cast<std::size_t>(std::floor(budget / per_rank * (1.0 + 1e-12)));
    return std::clamp<std::size_t>(r, 1, std::min(m, n));
}

BkdShape bkd_shape(std::size_t m, std::size_t n, std::size_t k) {
    return BkdShape{m, n, k, bkd_side_for(m, n, k), false};
}

BkdShape blocks_for_ratio(std::size_t m, std::size_t n, double ratio) {
    if (m == 0 || n == 0) throw ShapeError("blocks_for_ratio: dimensions must be positive");
    const double budget = ratio * static_cast<double>(m) * static_cast<double>(n) * (1.0 + 1e-12);
    const auto start = static_cast<std::size_t>(
                           std::floor(ratio * std::sqrt(static_cast<double>(m) * static_cast<double>(n)) / 2.0)) +
                       1;
    for (std::size_t k = start; k >= 1; --k) {
        const BkdShape s = bkd_shape(m, n, k);
        if (2.0 * static_cast<double>(k * k * s.z * s.z) <= budget) return s;
    }
    BkdShape fallback = bkd_shape(m, n, 1);
    fallback.over_budget = true;
    return fallback;
}

std::size_t frozen_rank_for(std::size_t m, std::size_t n, std::size_t r) {
    if (n == 0) throw ShapeError("frozen_rank_for: n must be positive");
    const std::size_t target = (m + n) * r;
    const std::size_t rf = (2 * target + n) / (2 * n);  // nearest, ties up
    return std::clamp<std::size_t>(rf, 1, std::min(m, n));
}

double low_rank_nominal_ratio(std::size_t m, std::size_t n, std::size_t r) {
    return 2.0 * static_cast<double>((m + n) * r) / (static_cast<double>(m) * static_cast<double>(n));
}

double bkd_nominal_ratio(const BkdShape& s) {
    return 2.0 * static_cast<double>(s.k * s.k * s.z * s.z) / (static_cast<double>(s.m) * static_cast<double>(s.n));
}

UpdateShape UpdateShape::dense(std::size_t m, std::size_t n) {
    if (m == 0 || n == 0) throw ShapeError("dense update: dimensions must be positive");
    return UpdateShape{UpdateKind::dense, m, n, 0, {}};
}

UpdateShape UpdateShape::low_rank(UpdateKind kind, std::size_t m, std::size_t n, std::size_t r) {
    if (!is_low_rank(kind)) throw ShapeError("UpdateShape::low_rank given a non-low-rank kind");
    if (m == 0 || n == 0 || r < 1 || r > std::min(m, n)) {
        throw ShapeError("low-rank shape requires 1 <= r <= min(m, n)");
    }
    return UpdateShape{kind, m, n, r, {}};
}

UpdateShape UpdateShape::block_kron(UpdateKind kind, const BkdShape& shape) {
    if (!is_bkd(kind)) throw ShapeError("UpdateShape::block_kron given a non-BKD kind");
    if (shape.k == 0 || shape.z == 0 || shape.side() * shape.side() < shape.m * shape.n) {
        throw ShapeError("BKD shape does not cover its target");
    }
    return UpdateShape{kind, shape.m, shape.n, 0, shape};
}

UpdateKind UpdateParam::kind() const noexcept {
    return static_cast<UpdateKind>(value_.index());
}

std::size_t UpdateParam::rows() const noexcept {
    return std::visit(overloaded{
                          [](const DenseUpdate& d) { return d.delta.rows(); },
                          [](const LowRankUpdate& d) { return d.u.rows(); },
                          [](const LowRankAadUpdate& d) { return d.u.rows(); },
                          [](const FrozenLowRankUpdate& d) { return d.u_fixed.rows(); },
                          [](const BkdUpdate& d) { return d.shape.m; },
                          [](const BkdAadUpdate& d) { return d.shape.m; },
                      },
                      value_);
}

std::size_t UpdateParam::cols() const noexcept {
    return std::visit(overloaded{
                          [](const DenseUpdate& d) { return d.delta.cols(); },
                          [](const LowRankUpdate& d) { return d.v.rows(); },
                          [](const LowRankAadUpdate& d) { return d.v.rows(); },
                          [](const FrozenLowRankUpdate& d) { return d.v.rows(); },
                          [](const BkdUpdate& d) { return d.shape.n; },
                          [](const BkdAadUpdate& d) { return d.shape.n; },
                      },
                      value_);
}

UpdateShape shape_of(const UpdateParam& u) {
    return std::visit(overloaded{
                          [](const DenseUpdate& d) { return UpdateShape::dense(d.delta.rows(), d.delta.cols()); },
                          [&](const LowRankUpdate& d) {
                              return UpdateShape::low_rank(u.kind(), u.rows(), u.cols(), d.u.cols());
                          },
                          [&](const LowRankAadUpdate& d) {
                              return UpdateShape::low_rank(u.kind(), u.rows(), u.cols(), d.u.cols());
                          },
                          [&](const FrozenLowRankUpdate& d) {
                              return UpdateShape::low_rank(u.kind(), u.rows(), u.cols(), d.v.cols());
                          },
                          [&](const BkdUpdate& d) { return UpdateShape::block_kron(u.kind(), d.shape); },
                          [&](const BkdAadUpdate& d) { return UpdateShape::block_kron(u.kind(), d.shape); },
                      },
                      u.value());
}

UpdateParam init_update(const UpdateShape& s, double bound, Rng& rng, InitMode mode) {
    const bool all = mode == InitMode::all_random;
    auto random_or_zero = [&](std::size_t r, std::size_t c, bool random) {
        return random ? fill_uniform(r, c, bound, rng) : Matrix(r, c);
    };
    switch (s.kind) {
    case UpdateKind::dense:
        return DenseUpdate{Matrix(s.m, s.n)};
    case UpdateKind::low_rank: {
        Matrix u = fill_uniform(s.m, s.rank, bound, rng);
        Matrix v = random_or_zero(s.n, s.rank, all);
        return LowRankUpdate{std::move(u), std::move(v)};
    }
    case UpdateKind::low_rank_aad: {
        Matrix uf = fill_uniform(s.m, s.rank, bound, rng);
        Matrix vf = fill_uniform(s.n, s.rank, bound, rng);
        Matrix u = random_or_zero(s.m, s.rank, all);
        Matrix v = random_or_zero(s.n, s.rank, all);
        return LowRankAadUpdate{std::move(u), std::move(v), std::move(uf), std::move(vf)};
    }
    case UpdateKind::frozen_low_rank: {
        Matrix uf = fill_uniform(s.m, s.rank, bound, rng);
        Matrix v = random_or_zero(s.n, s.rank, all);
        return FrozenLowRankUpdate{std::move(uf), std::move(v)};
    }
    case UpdateKind::bkd: {
        const std::size_t blocks = s.bkd.k * s.bkd.k;
        const std::size_t z = s.bkd.z;
        BkdUpdate out{s.bkd, {}, {}};
        out.u.reserve(blocks);
        out.v.reserve(blocks);
        for (std::size_t b = 0; b < blocks; ++b) {
            out.u.push_back(fill_uniform(z, z, bound, rng));
            out.v.push_back(random_or_zero(z, z, all));
        }
        return out;
    }
    case UpdateKind::bkd_aad: {
        const std::size_t blocks = s.bkd.k * s.bkd.k;
        const std::size_t z = s.bkd.z;
        BkdAadUpdate out{s.bkd, {}, {}, {}, {}};
        for (std::size_t b = 0; b < blocks; ++b) {
            out.u_fixed.push_back(fill_uniform(z, z, bound, rng));
            out.v_fixed.push_back(fill_uniform(z, z, bound, rng));
            out.u.push_back(random_or_zero(z, z, all));
            out.v.push_back(random_or_zero(z, z, all));
        }
        return out;
    }
    }
    throw ShapeError("init_update: unknown kind");
}

Matrix materialize(const UpdateParam& u) {
    return std::visit(
        overloaded{
            [](const DenseUpdate& d) { return d.delta; },
            [](const LowRankUpdate& d) { return matmul_nt(d.u, d.v); },
            [](const LowRankAadUpdate& d) {
                Matrix w = matmul_nt(d.u, d.v_fixed);
                axpy_inplace(w, matmul_nt(d.u_fixed, d.v), 1.0);
                return w;
            },
            [](const FrozenLowRankUpdate& d) { return matmul_nt(d.u_fixed, d.v); },
            [](const BkdUpdate& d) {
                Matrix big(d.shape.side(), d.shape.side());
                for (std::size_t b = 0; b < d.u.size(); ++b) add_kron_block(big, origin(d.shape, b), d.u[b], d.v[b]);
                return reshape_truncate(big, d.shape.m, d.shape.n);
            },
            [](const BkdAadUpdate& d) {
                Matrix big(d.shape.side(), d.shape.side());
                for (std::size_t b = 0; b < d.u.size(); ++b) {
                    add_kron_block(big, origin(d.shape, b), d.u[b], d.v_fixed[b]);
                    add_kron_block(big, origin(d.shape, b), d.u_fixed[b], d.v[b]);
                }
                return reshape_truncate(big, d.shape.m, d.shape.n);
            },
        },
        u.value());
}

UpdateGrad grad(const UpdateParam& u, const Matrix& d_weight) {
    require_target(u, d_weight);
    UpdateGrad g;
    std::visit(overloaded{
                   [&](const DenseUpdate&) { g.parts.push_back(d_weight); },
                   [&](const LowRankUpdate& d) {
                       g.parts.push_back(matmul(d_weight, d.v));
                       g.parts.push_back(matmul_tn(d_weight, d.u));
                   },
                   [&](const LowRankAadUpdate& d) {
                       g.parts.push_back(matmul(d_weight, d.v_fixed));
                       g.parts.push_back(matmul_tn(d_weight, d.u_fixed));
                   },
                   [&](const FrozenLowRankUpdate& d) { g.parts.push_back(matmul_tn(d_weight, d.u_fixed)); },
                   [&](const BkdUpdate& d) {
                       const Matrix dy = scatter_leading(d_weight, d.shape.side(), d.shape.side());
                       for (std::size_t b = 0; b < d.u.size(); ++b) {
                           const BlockOrigin o = origin(d.shape, b);
                           g.parts.push_back(kron_factor_grad_a(dy, o, d.v[b]));
                           g.parts.push_back(kron_factor_grad_b(dy, o, d.u[b]));
                       }
                   },
                   [&](const BkdAadUpdate& d) {
                       const Matrix dy = scatter_leading(d_weight, d.shape.side(), d.shape.side());
                       for (std::size_t b = 0; b < d.u.size(); ++b) {
                           const BlockOrigin o = origin(d.shape, b);
                           g.parts.push_back(kron_factor_grad_a(dy, o, d.v_fixed[b]));
                           g.parts.push_back(kron_factor_grad_b(dy, o, d.u_fixed[b]));
                       }
                   },
               },
               u.value());
    return g;
}

namespace {

template <typename P, typename U>
std::vector<P> collect_trainables(U& u) {
    std::vector<P> out;
    std::visit(overloaded{
                   [&](auto& d) {
                       using T = std::decay_t<decltype(d)>;
                       if constexpr (std::is_same_v<T, DenseUpdate>) {
                           out.push_back(&d.delta);
                       } else if constexpr (std::is_same_v<T, LowRankUpdate> ||
                                            std::is_same_v<T, LowRankAadUpdate>) {
                           out.push_back(&d.u);
                           out.push_back(&d.v);
                       } else if constexpr (std::is_same_v<T, FrozenLowRankUpdate>) {
                           out.push_back(&d.v);
                       } else {
                           for (std::size_t b = 0; b < d.u.size(); ++b) {
                               out.push_back(&d.u[b]);
                               out.push_back(&d.v[b]);
                           }
                       }
                   },
               },
               u.value());
    return out;
}

}  // namespace

std::vector<Matrix*> trainables(UpdateParam& u) { return collect_trainables<Matrix*>(u); }

std::vector<const Matrix*> trainables(const UpdateParam& u) {
    return collect_trainables<const Matrix*>(u);
}

std::vector<const Matrix*> fixed_parts(const UpdateParam& u) {
    std::vector<const Matrix*> out;
    std::visit(overloaded{
                   [](const DenseUpdate&) {},
                   [](const LowRankUpdate&) {},
                   [&](const LowRankAadUpdate& d) {
                       out.push_back(&d.u_fixed);
                       out.push_back(&d.v_fixed);
                   },
                   [&](const FrozenLowRankUpdate& d) { out.push_back(&d.u_fixed); },
                   [](const BkdUpdate&) {},
                   [&](const BkdAadUpdate& d) {
                       for (std::size_t b = 0; b < d.u_fixed.size(); ++b) {
                           out.push_back(&d.u_fixed[b]);
                           out.push_back(&d.v_fixed[b]);
                       }
                   },
               },
               u.value());
    return out;
}

std::uint64_t fixed_checksum(const UpdateParam& u) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const Matrix* m : fixed_parts(u)) h = checksum_combine(h, checksum(*m));
    return h;
}

void apply_gradient(UpdateParam& u, const UpdateGrad& g, double lr) {
    auto params = trainables(u);
    if (params.size() != g.parts.size()) throw ShapeError("apply_gradient: gradient does not match update layout");
    for (std::size_t i = 0; i < params.size(); ++i) axpy_inplace(*params[i], g.parts[i], -lr);
}

UpdateParam aggregate(std::span<const UpdateParam> updates, std::span<const double> weights) {
    if (updates.empty()) throw AggregationError("aggregate: no updates");
    if (!weights.empty() && weights.size() != updates.size()) {
        throw AggregationError("aggregate: weight count does not match update count");
    }
    const UpdateShape shape = shape_of(updates.front());
    const std::uint64_t fixed = fixed_checksum(updates.front());
    for (std::size_t i = 1; i < updates.size(); ++i) {
        if (!(shape_of(updates[i]) == shape)) {
            throw AggregationError("aggregate: update " + std::to_string(i) + " differs in kind or shape");
        }
        if (fixed_checksum(updates[i]) != fixed) {
            throw ProtocolError("aggregate: fixed matrices of update " + std::to_string(i) +
                                " disagree with update 0");
        }
    }

    UpdateParam out = updates.front();
    auto targets = trainables(out);
    std::vector<std::vector<const Matrix*>> sources;
    sources.reserve(updates.size());
    for (const auto& u : updates) sources.push_back(trainables(u));
    std::vector<Matrix> column;
    column.reserve(updates.size());
    for (std::size_t p = 0; p < targets.size(); ++p) {
        column.clear();
        for (const auto& src : sources) column.push_back(*src[p]);
        *targets[p] = weights.empty() ? mean(column) : weighted_mean(column, weights);
    }
    return out;
}

std::size_t param_count(const UpdateShape& s) {
    switch (s.kind) {
    case UpdateKind::dense:
        return s.m * s.n;
    case UpdateKind::low_rank:
    case UpdateKind::low_rank_aad:
        return (s.m + s.n) * s.rank;
    case UpdateKind::frozen_low_rank:
        return s.n * s.rank;
    case UpdateKind::bkd:
    case UpdateKind::bkd_aad:
        return 2 * s.bkd.k * s.bkd.k * s.bkd.z * s.bkd.z;
    }
    return 0;
}

std::size_t param_count(const UpdateParam& u) {
    std::size_t total = 0;
    for (const Matrix* m : trainables(u)) total += m->size();
    return total;
}

double compression_ratio(const UpdateParam& u) {
    return static_cast<double>(param_count(u)) / (static_cast<double>(u.rows()) * static_cast<double>(u.cols()));
}

}  // namespace fllab::decomp
