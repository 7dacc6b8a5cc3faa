// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails. Tolerances and trial counts are fixed here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fllab/config.hpp"
#include "fllab/decomp.hpp"
#include "fllab/federation.hpp"
#include "fllab/metrics.hpp"
#include "fllab/model.hpp"
#include "oracles.hpp"

namespace {

using namespace fllab;
using decomp::UpdateKind;
using federation::Method;

constexpr double kAadTol = 1e-12;
constexpr double kBiasTol = 1e-12;
constexpr double kRankTol = 1e-9;
constexpr double kGradTol = 1e-5;
constexpr double kFdStep = 1e-5;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// 1 and 2: aggregation of trained factor updates

struct Instance {
    std::size_t m, n, r, clients;
    std::uint64_t seed;
};

std::vector<Instance> aggregation_instances() {
    Rng rng(0xA66);
    std::vector<Instance> out;
    for (int i = 0; i < 100; ++i) {
        Instance in{};
        in.m = 1 + rng.below(32);
        in.n = 1 + rng.below(32);
        in.r = 1 + rng.below(std::min<std::size_t>(4, std::min(in.m, in.n)));
        in.clients = 2 + rng.below(7);
        in.seed = rng.next();
        out.push_back(in);
    }
    return out;
}

/// Client i starts from the shared initialization and moves each trainable
/// by a random delta; returns the updates and their deltas.
std::vector<decomp::UpdateParam> trained_updates(const decomp::UpdateShape& shape, const Instance& in,
                                                 std::vector<std::vector<Matrix>>* deltas = nullptr) {
    Rng shared(in.seed);
    const auto start = decomp::init_update(shape, 0.5, shared);
    Rng local(in.seed ^ 0x5EED);
    std::vector<decomp::UpdateParam> out;
    for (std::size_t c = 0; c < in.clients; ++c) {
        auto u = start;
        std::vector<Matrix> d;
        for (Matrix* t : decomp::trainables(u)) {
            Matrix delta(t->rows(), t->cols());
            for (double& v : delta.data()) v = local.uniform(-1.0, 1.0);
            axpy_inplace(*t, delta, 1.0);
            d.push_back(std::move(delta));
        }
        if (deltas) deltas->push_back(std::move(d));
        out.push_back(std::move(u));
    }
    return out;
}

Outcome aad_exactness() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (const auto& in : aggregation_instances()) {
        for (auto shape : {decomp::UpdateShape::low_rank(UpdateKind::low_rank_aad, in.m, in.n, in.r),
                           decomp::UpdateShape::block_kron(UpdateKind::bkd_aad,
                                                           decomp::bkd_shape(in.m, in.n, 1 + in.r % 3))}) {
            const auto us = trained_updates(shape, in);
            std::vector<Matrix> ws;
            for (const auto& u : us) ws.push_back(decomp::materialize(u));
            const Matrix desired = mean(ws);
            const Matrix actual = decomp::materialize(decomp::aggregate(us));
            const double rel = frobenius_norm(add_scaled(actual, desired, -1.0)) / (1.0 + frobenius_norm(desired));
            worst = std::max(worst, rel);
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= kAadTol && secs < 5.0,
            "max rel deviation " + fmt(worst) + " (tol " + fmt(kAadTol) + "), " + fmt(secs) + " s (limit 5 s)"};
}

Outcome aggregation_bias() {
    double worst = 0.0;
    for (const auto& in : aggregation_instances()) {
        const auto shape = decomp::UpdateShape::low_rank(UpdateKind::low_rank, in.m, in.n, in.r);
        std::vector<std::vector<Matrix>> deltas;
        const auto us = trained_updates(shape, in, &deltas);
        std::vector<Matrix> ws, du, dv, cross;
        for (std::size_t c = 0; c < us.size(); ++c) {
            ws.push_back(decomp::materialize(us[c]));
            du.push_back(deltas[c][0]);
            dv.push_back(deltas[c][1]);
            cross.push_back(matmul_nt(deltas[c][0], deltas[c][1]));
        }
        const Matrix deviation = add_scaled(decomp::materialize(decomp::aggregate(us)), mean(ws), -1.0);
        const Matrix closed = add_scaled(matmul_nt(mean(du), mean(dv)), mean(cross), -1.0);
        const double rel = frobenius_norm(add_scaled(deviation, closed, -1.0)) / frobenius_norm(closed);
        worst = std::max(worst, rel);
    }
    return {worst <= kBiasTol, "max rel error vs closed form " + fmt(worst) + " (tol " + fmt(kBiasTol) + ")"};
}

// ---------------------------------------------------------------------------
// 3 and 4: rank properties

Outcome kron_rank() {
    Rng rng(0x3C);
    int failures = 0, deficient = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t ar = 1 + rng.below(4), ac = 1 + rng.below(4);
        const std::size_t br = 1 + rng.below(4), bc = 1 + rng.below(4);
        const std::size_t ra = rng.below(std::min(ar, ac) + 1);
        const std::size_t rb = rng.below(std::min(br, bc) + 1);
        if (ra < std::min(ar, ac) || rb < std::min(br, bc)) ++deficient;
        const auto a = oracle::random_rank(ar, ac, ra, rng);
        const auto b = oracle::random_rank(br, bc, rb, rng);
        if (rank(kron(a, b), kRankTol) != rank(a, kRankTol) * rank(b, kRankTol)) ++failures;
    }
    return {failures == 0,
            std::to_string(failures) + " failures of 200 (" + std::to_string(deficient) + " rank-deficient pairs)"};
}

Outcome bkd_full_rank() {
    bool pass = true;
    std::string detail;
    for (std::size_t k : {1u, 2u, 4u})
        for (std::size_t z : {2u, 3u}) {
            const std::size_t m = k * z * z;
            const auto shape = decomp::UpdateShape::block_kron(UpdateKind::bkd, decomp::bkd_shape(m, m, k));
            int full = 0;
            for (std::uint64_t trial = 0; trial < 100; ++trial) {
                Rng rng(derive_seed(0xB4D, k * 16 + z, trial));
                const auto u = decomp::init_update(shape, 1.0, rng, decomp::InitMode::all_random);
                if (rank(decomp::materialize(u), kRankTol) == m) ++full;
            }
            pass = pass && full >= 95;
            detail += (detail.empty() ? "" : ", ") + std::string("k=") + std::to_string(k) + ",z=" +
                      std::to_string(z) + ": " + std::to_string(full) + "/100";
        }
    return {pass, detail + " (need >= 95 each)"};
}

// ---------------------------------------------------------------------------
// 5: gradients through the whole model

Outcome gradient_correctness() {
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t checked = 0, failed = 0;
    double worst = 0.0;
    for (auto kind : {UpdateKind::dense, UpdateKind::low_rank, UpdateKind::low_rank_aad, UpdateKind::frozen_low_rank,
                      UpdateKind::bkd, UpdateKind::bkd_aad}) {
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            Rng rng(derive_seed(0x6AD, static_cast<std::uint64_t>(kind), seed));
            const std::size_t d0 = 2 + rng.below(11), d1 = 2 + rng.below(11), d2 = 2 + rng.below(11);
            const std::size_t classes = 2 + rng.below(5);
            auto spec = [&](std::size_t in, std::size_t out, model::Activation act) {
                return model::LayerSpec{in, out, act, model::Compression{kind, 0.5, 0.3, {}, {}}};
            };
            const std::vector<model::LayerSpec> specs{spec(d0, d1, model::Activation::relu),
                                                      spec(d1, d2, model::Activation::relu),
                                                      spec(d2, classes, model::Activation::none)};
            auto m = model::build_model(specs, {rng.next(), rng.next(), false, decomp::InitMode::zero_start});
            std::vector<Matrix*> params;
            for (auto& l : m.layers) {
                params.push_back(&l.bias);
                for (Matrix* t : decomp::trainables(*l.update)) params.push_back(t);
            }
            for (Matrix* p : params)
                for (double& v : p->data()) v += rng.uniform(-0.3, 0.3);

            const Matrix x = oracle::random_normal(4, d0, rng);
            std::vector<Label> y;
            for (int i = 0; i < 4; ++i) y.push_back(static_cast<Label>(rng.below(classes)));
            const auto lg = model::loss_and_backward(m, x, y);
            std::vector<Matrix> grads;
            for (const auto& g : lg.grads.layers) {
                grads.push_back(g.bias);
                for (const auto& part : g.update->parts) grads.push_back(part);
            }
            const auto loss = [&] { return model::cross_entropy(model::forward(m, x).logits, y); };
            for (std::size_t p = 0; p < params.size(); ++p) {
                auto d = params[p]->data();
                for (std::size_t i = 0; i < d.size(); ++i) {
                    const double saved = d[i];
                    d[i] = saved + kFdStep;
                    const double up = loss();
                    d[i] = saved - kFdStep;
                    const double down = loss();
                    d[i] = saved;
                    const double err = oracle::grad_rel_error(grads[p].data()[i], (up - down) / (2 * kFdStep));
                    worst = std::max(worst, err);
                    ++checked;
                    if (err > kGradTol) ++failed;
                }
            }
        }
    }
    const double secs = seconds_since(t0);
    return {failed == 0 && secs < 30.0, std::to_string(checked - failed) + "/" + std::to_string(checked) +
                                            " parameters within " + fmt(kGradTol) + " (worst " + fmt(worst) +
                                            "), " + fmt(secs) + " s (limit 30 s)"};
}

// ---------------------------------------------------------------------------
// Shared synthetic task for the run-level criteria

config::Experiment trend_task(std::uint64_t seed, Method method, std::size_t rounds) {
    config::Experiment e;
    e.data.train_samples = 5000;
    e.data.test_samples = 1000;
    e.data.dim = 32;
    e.data.classes = 10;
    e.data.margin = 5.0;
    e.data.partition = config::PartitionScheme::dirichlet;
    e.data.alpha = 0.3;
    e.model.hidden = {64, 64};
    e.fed.method = method;
    e.fed.rounds = rounds;
    e.fed.clients = 20;
    e.fed.participants = 5;
    e.fed.local_epochs = 3;
    e.fed.batch_size = 32;
    e.fed.lr = 0.1;
    e.fed.init_bound = 0.1;
    e.fed.ratio = 1.0 / 8.0;
    e.fed.reset_interval = 1;
    e.fed.global_seed = seed;
    return e;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome fedlmt_reduction() {
    const auto root = std::filesystem::temp_directory_path() / "fllab_acceptance_fedlmt";
    std::filesystem::remove_all(root);
    auto preset = trend_task(3, Method::fedlmt, 20);
    auto manual = trend_task(3, Method::fedmud, 20);
    manual.fed.zero_compressed_base = true;
    manual.fed.random_v_init = true;
    manual.fed.reset_interval = 20;
    config::run_experiment(preset, root / "preset");
    config::run_experiment(manual, root / "manual");
    const auto a = slurp(root / "preset" / "metrics.csv");
    const auto b = slurp(root / "manual" / "metrics.csv");
    std::size_t rows = 0;
    for (char c : a) rows += c == '\n';
    std::filesystem::remove_all(root);
    return {!a.empty() && a == b, std::string(a == b ? "metrics.csv byte-identical" : "metrics.csv differs") +
                                      " over " + std::to_string(rows - 1) + " rounds (" + std::to_string(a.size()) +
                                      " bytes)"};
}

// ---------------------------------------------------------------------------
// 7: traffic accounting

Outcome communication_accounting() {
    const std::size_t m = 1024, n = 1024;
    const double rho = 1.0 / 32.0;
    const auto r = decomp::rank_for_ratio(m, n, rho);
    const auto lr_count = decomp::param_count(decomp::UpdateShape::low_rank(UpdateKind::low_rank, m, n, r));
    const auto bkd = decomp::blocks_for_ratio(m, n, rho);
    const auto bkd_count = decomp::param_count(decomp::UpdateShape::block_kron(UpdateKind::bkd, bkd));

    auto layer_bytes = [&](UpdateKind kind) {
        federation::FedConfig c;
        const std::vector<model::LayerSpec> specs{
            {n, m, model::Activation::none, model::Compression{kind, rho, 0.1, {}, {}}}};
        return federation::account_communication(c, model::build_model(specs, {})).layer_weight_bytes[0];
    };
    const auto lr_bytes = layer_bytes(UpdateKind::low_rank);
    const auto bkd_bytes = layer_bytes(UpdateKind::bkd);
    const std::uint64_t dense_bytes = m * n * 8;

    const bool pass = r == 8 && lr_count == 16384 && 2 * (m + n) * r * 32 == m * n && lr_bytes == 16384u * 8u &&
                      lr_bytes * 64 == dense_bytes && bkd.k == 16 && bkd.z == 8 && bkd_count == 32768 &&
                      2 * bkd.k * bkd.k * bkd.z * bkd.z * 32 == m * n && bkd_bytes == 32768u * 8u &&
                      bkd_bytes * 32 == dense_bytes;
    return {pass, "lowrank r=" + std::to_string(r) + " count=" + std::to_string(lr_count) +
                      " (formula ratio 2(m+n)r/mn=1/" + std::to_string(m * n / (2 * (m + n) * r)) +
                      ", transmitted 1/" + std::to_string(dense_bytes / lr_bytes) + "); bkd k=" +
                      std::to_string(bkd.k) + " z=" + std::to_string(bkd.z) + " count=" + std::to_string(bkd_count) +
                      " (transmitted 1/" + std::to_string(dense_bytes / bkd_bytes) + ")"};
}

// ---------------------------------------------------------------------------
// 8 and 9: directional trends

struct Final {
    double loss = 0.0;
    double acc = 0.0;
};

Final final_metrics(const config::Experiment& e) {
    const auto resolved_fed = federation::apply_preset(e.fed);
    auto resolved = e;
    resolved.fed = resolved_fed;
    const auto prepared = config::prepare_data(resolved);
    const auto specs = config::layer_specs(resolved, prepared.train.dim(), prepared.train.num_classes);
    const auto result = federation::run(resolved.fed, specs, prepared.train, prepared.test, prepared.partition);
    return {result.reports.back().test_loss, result.reports.back().test_acc};
}

constexpr std::size_t kTrendRounds = 60;
constexpr std::uint64_t kTrendSeeds = 5;

struct TrendRuns {
    std::vector<Final> fedmud, fedmud_aad, fedmud_bkd_aad, fedlmt, fedmud_s_r;
    double seconds = 0.0;
};

TrendRuns trend_runs() {
    const auto t0 = std::chrono::steady_clock::now();
    TrendRuns t;
    for (std::uint64_t seed = 0; seed < kTrendSeeds; ++seed) {
        t.fedmud.push_back(final_metrics(trend_task(seed, Method::fedmud, kTrendRounds)));
        t.fedmud_aad.push_back(final_metrics(trend_task(seed, Method::fedmud_aad, kTrendRounds)));
        t.fedmud_bkd_aad.push_back(final_metrics(trend_task(seed, Method::fedmud_bkd_aad, kTrendRounds)));
        t.fedlmt.push_back(final_metrics(trend_task(seed, Method::fedlmt, kTrendRounds)));
        auto sr = trend_task(seed, Method::fedmud, kTrendRounds);
        sr.fed.reset_interval = kTrendRounds;
        t.fedmud_s_r.push_back(final_metrics(sr));
        std::fprintf(stderr,
                     "  seed %llu: loss fedmud_aad %.4f fedlmt %.4f | acc fedmud_bkd_aad %.4f fedmud %.4f | "
                     "acc s=1 %.4f s=R %.4f\n",
                     static_cast<unsigned long long>(seed), t.fedmud_aad.back().loss, t.fedlmt.back().loss,
                     t.fedmud_bkd_aad.back().acc, t.fedmud.back().acc, t.fedmud.back().acc, t.fedmud_s_r.back().acc);
    }
    t.seconds = seconds_since(t0);
    return t;
}

Outcome convergence_trend(const TrendRuns& t) {
    int loss_wins = 0, acc_wins = 0;
    for (std::size_t i = 0; i < kTrendSeeds; ++i) {
        loss_wins += t.fedmud_aad[i].loss < t.fedlmt[i].loss;
        acc_wins += t.fedmud_bkd_aad[i].acc >= t.fedmud[i].acc;
    }
    return {loss_wins >= 4 && acc_wins >= 4 && t.seconds < 600.0,
            "fedmud_aad loss < fedlmt in " + std::to_string(loss_wins) + "/5, fedmud_bkd_aad acc >= fedmud in " +
                std::to_string(acc_wins) + "/5 (need 4/5 each); all trend runs " + fmt(t.seconds) +
                " s (limit 600 s)"};
}

Outcome reset_interval_trend(const TrendRuns& t) {
    int wins = 0;
    for (std::size_t i = 0; i < kTrendSeeds; ++i) wins += t.fedmud[i].acc >= t.fedmud_s_r[i].acc;
    return {wins >= 4, "acc(s=1) >= acc(s=R) in " + std::to_string(wins) + "/5 (need 4/5)"};
}

// ---------------------------------------------------------------------------
// 10: merge neutrality and frozen bases

Outcome merge_and_frozen_base() {
    std::size_t merges = 0, steps = 0, logit_mismatch = 0, base_changes = 0;
    for (auto [method, interval] : {std::pair{Method::fedmud, std::size_t{1}}, std::pair{Method::fedmud_bkd_aad, 1ul},
                                    std::pair{Method::fedmud_aad, 3ul}, std::pair{Method::fedmud_f, 2ul}}) {
        auto e = trend_task(7, method, 20);
        e.fed.reset_interval = interval;
        e.fed = federation::apply_preset(e.fed);
        const auto prepared = config::prepare_data(e);
        const auto specs = config::layer_specs(e, prepared.train.dim(), prepared.train.num_classes);
        Rng rng(11);
        const Matrix probe = oracle::random_normal(16, prepared.train.dim(), rng);

        std::uint64_t expected_base = model::base_checksum(federation::initial_model(e.fed, specs));
        Matrix before;
        federation::RunHooks hooks;
        hooks.after_client_step = [&](std::size_t, std::size_t, const model::Model& local) {
            ++steps;
            if (model::base_checksum(local) != expected_base) ++base_changes;
        };
        hooks.before_merge = [&](std::size_t, const model::Model& g) {
            if (model::base_checksum(g) != expected_base) ++base_changes;
            before = model::forward(g, probe).logits;
        };
        hooks.after_round = [&](std::size_t t, const model::Model& g) {
            if (t % e.fed.reset_interval == 0) {
                ++merges;
                if (!(model::forward(g, probe).logits == before)) ++logit_mismatch;
            }
            expected_base = model::base_checksum(g);
        };
        federation::run(e.fed, specs, prepared.train, prepared.test, prepared.partition, hooks);
    }
    return {merges > 0 && logit_mismatch == 0 && base_changes == 0,
            std::to_string(merges - logit_mismatch) + "/" + std::to_string(merges) +
                " merges bit-identical on probe logits; base hash changed in " + std::to_string(base_changes) +
                " of " + std::to_string(steps) + " local steps"};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> check;
    };
    TrendRuns trends;
    bool trends_ready = false;
    auto ensure_trends = [&]() -> const TrendRuns& {
        if (!trends_ready) {
            trends = trend_runs();
            trends_ready = true;
        }
        return trends;
    };

    const std::vector<Criterion> criteria{
        {1, "AAD aggregation exactness", aad_exactness},
        {2, "low-rank aggregation bias closed form", aggregation_bias},
        {3, "Kronecker rank multiplicativity", kron_rank},
        {4, "BKD full-rank reachability", bkd_full_rank},
        {5, "gradient correctness (finite differences)", gradient_correctness},
        {6, "fedlmt preset equals the fedmud degeneration", fedlmt_reduction},
        {7, "communication accounting", communication_accounting},
        {8, "directional convergence trend", [&] { return convergence_trend(ensure_trends()); }},
        {9, "reset-interval trend", [&] { return reset_interval_trend(ensure_trends()); }},
        {10, "merge neutrality and frozen base", merge_and_frozen_base},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
