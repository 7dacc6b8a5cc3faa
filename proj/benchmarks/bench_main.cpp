#include <benchmark/benchmark.h>

#include <numeric>

#include "fllab/data.hpp"
#include "fllab/decomp.hpp"
#include "fllab/federation.hpp"
#include "fllab/presets.hpp"

namespace {

using namespace fllab;

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    Rng rng(seed);
    return fill_uniform(r, c, 1.0, rng);
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128)->Arg(256);

void BM_Kron(benchmark::State& state) {
    const auto z = static_cast<std::size_t>(state.range(0));
    const auto a = random_matrix(z, z, 1), b = random_matrix(z, z, 2);
    for (auto _ : state) benchmark::DoNotOptimize(kron(a, b));
}
BENCHMARK(BM_Kron)->Arg(4)->Arg(8)->Arg(16);

decomp::UpdateShape shape_for(decomp::UpdateKind kind, std::size_t m, std::size_t n, double ratio) {
    using decomp::UpdateKind;
    if (kind == UpdateKind::dense) return decomp::UpdateShape::dense(m, n);
    if (decomp::is_bkd(kind)) return decomp::UpdateShape::block_kron(kind, decomp::blocks_for_ratio(m, n, ratio));
    return decomp::UpdateShape::low_rank(kind, m, n, decomp::rank_for_ratio(m, n, ratio));
}

decomp::UpdateParam trained(decomp::UpdateKind kind, std::size_t dim) {
    Rng rng(3);
    auto u = decomp::init_update(shape_for(kind, dim, dim, 1.0 / 8.0), 0.1, rng, decomp::InitMode::all_random);
    return u;
}

void BM_Materialize(benchmark::State& state) {
    const auto kind = static_cast<decomp::UpdateKind>(state.range(0));
    const auto u = trained(kind, static_cast<std::size_t>(state.range(1)));
    state.SetLabel(std::string(decomp::to_string(kind)));
    for (auto _ : state) benchmark::DoNotOptimize(decomp::materialize(u));
}

void BM_Grad(benchmark::State& state) {
    const auto kind = static_cast<decomp::UpdateKind>(state.range(0));
    const auto dim = static_cast<std::size_t>(state.range(1));
    const auto u = trained(kind, dim);
    const auto dw = random_matrix(dim, dim, 4);
    state.SetLabel(std::string(decomp::to_string(kind)));
    for (auto _ : state) benchmark::DoNotOptimize(decomp::grad(u, dw));
}

void BM_Aggregate(benchmark::State& state) {
    const auto kind = static_cast<decomp::UpdateKind>(state.range(0));
    const std::vector<decomp::UpdateParam> us(10, trained(kind, static_cast<std::size_t>(state.range(1))));
    state.SetLabel(std::string(decomp::to_string(kind)));
    for (auto _ : state) benchmark::DoNotOptimize(decomp::aggregate(us));
}

void kinds_by_dim(benchmark::internal::Benchmark* b) {
    for (int kind = 0; kind <= static_cast<int>(decomp::UpdateKind::bkd_aad); ++kind)
        for (int dim : {64, 256}) b->Args({kind, dim});
}
BENCHMARK(BM_Materialize)->Apply(kinds_by_dim);
BENCHMARK(BM_Grad)->Apply(kinds_by_dim);
BENCHMARK(BM_Aggregate)->Apply(kinds_by_dim);

void BM_FederatedRound(benchmark::State& state) {
    const auto method = federation::kAllMethods[state.range(0)];
    federation::FedConfig c;
    c.method = method;
    c.rounds = 1;
    c.clients = 20;
    c.participants = 5;
    c.local_epochs = 1;
    c.batch_size = 32;
    c.ratio = 1.0 / 8.0;
    c = federation::apply_preset(c);
    const auto full = data::synth_classification(3000, 32, 10, 5.0, 1);
    const auto split = data::holdout(full, 500, 2);
    const auto part = data::partition_dirichlet(split.train, c.clients, 0.3, 3);
    const auto specs = federation::preset_layers(c, federation::Architecture{32, {64, 64}, 10});
    state.SetLabel(std::string(federation::to_string(method)));
    for (auto _ : state) benchmark::DoNotOptimize(federation::run(c, specs, split.train, split.test, part));
}
BENCHMARK(BM_FederatedRound)->DenseRange(0, 6)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
