#include "fllab/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "fllab/error.hpp"

namespace fllab::metrics {

Evaluation evaluate(const model::Model& model, const Matrix& features, std::span<const Label> labels) {
    if (labels.empty()) throw ShapeError("evaluate: empty test set");
    if (features.rows() != labels.size()) throw ShapeError("evaluate: label count mismatch");
    const Matrix logits = model::forward(model, features).logits;
    Evaluation e;
    e.loss = model::cross_entropy(logits, labels);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto row = logits.row(r);
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        if (best == labels[r]) ++correct;
    }
    e.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
    return e;
}

std::vector<double> jacobi_eigenvalues(Matrix a, double tol, int max_sweeps) {
    const std::size_t n = a.rows();
    if (n != a.cols()) throw ShapeError("jacobi_eigenvalues: matrix is not square");
    double scale = 0.0;
    for (double v : a.data()) scale = std::max(scale, std::abs(v));
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(off) <= tol * std::max(scale, 1e-300)) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
    std::sort(eig.begin(), eig.end());
    return eig;
}

std::optional<double> sigma_min_diag(const Matrix& m) {
    if (m.empty() || m.rows() > kSigmaMaxDim || m.cols() > kSigmaMaxDim) return std::nullopt;
    const Matrix gram = m.rows() >= m.cols() ? matmul_tn(m, m) : matmul_nt(m, m);
    const auto eig = jacobi_eigenvalues(gram);
    return std::sqrt(std::max(0.0, eig.front()));
}

namespace {

double sum_sq(const Matrix& m) {
    const double f = frobenius_norm(m);
    return f * f;
}

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// U-side and V-side factors of an update.
void split_factors(const decomp::UpdateParam& u, std::vector<const Matrix*>& us, std::vector<const Matrix*>& vs) {
    using namespace decomp;
    std::visit(overloaded{
                   [](const DenseUpdate&) {},
                   [&](const LowRankUpdate& d) {
                       us.push_back(&d.u);
                       vs.push_back(&d.v);
                   },
                   [&](const LowRankAadUpdate& d) {
                       us.push_back(&d.u);
                       vs.push_back(&d.v);
                   },
                   [&](const FrozenLowRankUpdate& d) {
                       us.push_back(&d.u_fixed);
                       vs.push_back(&d.v);
                   },
                   [&](const BkdUpdate& d) {
                       for (const auto& m : d.u) us.push_back(&m);
                       for (const auto& m : d.v) vs.push_back(&m);
                   },
                   [&](const BkdAadUpdate& d) {
                       for (const auto& m : d.u) us.push_back(&m);
                       for (const auto& m : d.v) vs.push_back(&m);
                   },
               },
               u.value());
}

}  // namespace

FactorNorms factor_norms(const model::Model& model) {
    FactorNorms out;
    for (const auto& layer : model.layers) {
        double u2 = 0.0;
        double v2 = 0.0;
        if (layer.update) {
            std::vector<const Matrix*> us;
            std::vector<const Matrix*> vs;
            split_factors(*layer.update, us, vs);
            for (const Matrix* m : us) u2 += sum_sq(*m);
            for (const Matrix* m : vs) v2 += sum_sq(*m);
        }
        out.u.push_back(std::sqrt(u2));
        out.v.push_back(std::sqrt(v2));
    }
    return out;
}

double sigma_min_over_factors(const model::Model& model, std::size_t* skipped) {
    double best = std::numeric_limits<double>::infinity();
    bool any = false;
    if (skipped) *skipped = 0;
    for (const auto& layer : model.layers) {
        if (!layer.update) continue;
        std::vector<const Matrix*> factors;
        split_factors(*layer.update, factors, factors);
        for (const Matrix* m : factors) {
            if (auto s = sigma_min_diag(*m)) {
                best = std::min(best, *s);
                any = true;
            } else if (skipped) {
                ++*skipped;
            }
        }
    }
    return any ? best : std::numeric_limits<double>::quiet_NaN();
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string csv_row(const RoundReport& r) {
    std::string row;
    row += std::to_string(r.round);
    row += ',' + format_double(r.train_loss);
    row += ',' + format_double(r.test_loss);
    row += ',' + format_double(r.test_acc);
    row += ',' + std::to_string(r.uplink_bytes);
    row += ',' + std::to_string(r.downlink_bytes);
    row += r.merged ? ",1" : ",0";
    row += ',' + format_double(r.u_norm_max);
    row += ',' + format_double(r.v_norm_max);
    row += ',' + format_double(r.sigma_min_min);
    return row;
}

MetricsSink::MetricsSink(std::filesystem::path path) : path_(std::move(path)) {
    out_.open(path_, std::ios::out | std::ios::trunc);
    if (!out_) throw IoError("cannot open " + path_.string() + " for writing");
    out_ << kCsvHeader << '\n';
    out_.flush();
    if (!out_) throw IoError("write failed for " + path_.string());
}

void MetricsSink::write_round(const RoundReport& report) {
    if (!out_.is_open()) throw IoError("metrics sink already finalized");
    if (rows_ > 0 && report.round <= last_round_) throw IoError("metrics rows must be written in round order");
    out_ << csv_row(report) << '\n';
    out_.flush();
    if (!out_) throw IoError("write failed for " + path_.string());
    last_round_ = report.round;
    ++rows_;
}

void MetricsSink::finalize() {
    if (!out_.is_open()) return;
    out_.flush();
    const bool ok = static_cast<bool>(out_);
    out_.close();
    if (!ok) throw IoError("write failed for " + path_.string());
}

}  // namespace fllab::metrics
