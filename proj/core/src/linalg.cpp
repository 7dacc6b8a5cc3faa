#include "fllab/linalg.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "fllab/error.hpp"

namespace fllab {

namespace {

std::string dims(const Matrix& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + dims(a) + " and " + dims(b));
}

void require_positive(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) throw ShapeError("matrix dimensions must be positive");
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
    require_positive(rows, cols);
    data_.assign(rows * cols, 0.0);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require_positive(rows, cols);
    if (data_.size() != rows * cols) {
        throw ShapeError("matrix data length does not equal rows * cols");
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    require_positive(rows_, cols_);
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("ragged matrix literal");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool operator==(const Matrix& a, const Matrix& b) noexcept {
    if (!a.same_shape(b)) return false;
    return a.data_.empty() ||
           std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(double)) == 0;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) shape_fail("matmul", a, b);
    Matrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* crow = c.data().data() + i * n;
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const double* brow = b.data().data() + k * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) shape_fail("matmul_nt", a, b);
    Matrix c(a.rows(), b.rows());
    const std::size_t inner = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.data().data() + i * inner;
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* brow = b.data().data() + j * inner;
            double acc = 0.0;
            for (std::size_t k = 0; k < inner; ++k) acc += arow[k] * brow[k];
            c(i, j) = acc;
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) shape_fail("matmul_tn", a, b);
    Matrix c(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* brow = b.data().data() + k * n;
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            double* crow = c.data().data() + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (std::size_t p = 0; p < a.rows(); ++p)
        for (std::size_t q = 0; q < a.cols(); ++q) {
            const double apq = a(p, q);
            for (std::size_t i = 0; i < b.rows(); ++i)
                for (std::size_t j = 0; j < b.cols(); ++j)
                    out(p * b.rows() + i, q * b.cols() + j) = apq * b(i, j);
        }
    return out;
}

std::size_t rank(const Matrix& m, double tol) {
    if (m.empty()) return 0;
    Matrix work = m;
    double scale = 0.0;
    for (double v : work.data()) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) return 0;
    const double threshold = tol * scale;

    std::size_t found = 0;
    std::size_t pivot_row = 0;
    for (std::size_t col = 0; col < work.cols() && pivot_row < work.rows(); ++col) {
        std::size_t best = pivot_row;
        for (std::size_t r = pivot_row + 1; r < work.rows(); ++r)
            if (std::abs(work(r, col)) > std::abs(work(best, col))) best = r;
        if (std::abs(work(best, col)) <= threshold) continue;
        if (best != pivot_row)
            for (std::size_t c = 0; c < work.cols(); ++c) std::swap(work(best, c), work(pivot_row, c));
        const double pivot = work(pivot_row, col);
        for (std::size_t r = pivot_row + 1; r < work.rows(); ++r) {
            const double f = work(r, col) / pivot;
            if (f == 0.0) continue;
            for (std::size_t c = col; c < work.cols(); ++c) work(r, c) -= f * work(pivot_row, c);
        }
        ++pivot_row;
        ++found;
    }
    return found;
}

Matrix reshape_truncate(const Matrix& src, std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0 || src.size() < rows * cols) {
        throw ShapeError("reshape_truncate: " + dims(src) + " has fewer than " +
                         std::to_string(rows * cols) + " entries");
    }
    const auto d = src.data();
    return Matrix(rows, cols, std::vector<double>(d.begin(), d.begin() + rows * cols));
}

Matrix scatter_leading(const Matrix& src, std::size_t rows, std::size_t cols) {
    if (rows * cols < src.size()) {
        throw ShapeError("scatter_leading: target smaller than " + dims(src));
    }
    Matrix out(rows, cols);
    std::copy(src.data().begin(), src.data().end(), out.data().begin());
    return out;
}

Matrix fill_uniform(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.uniform(-bound, bound);
    return m;
}

double frobenius_norm(const Matrix& m) {
    double acc = 0.0;
    for (double v : m.data()) acc += v * v;
    return std::sqrt(acc);
}

Matrix add_scaled(const Matrix& a, const Matrix& b, double alpha) {
    Matrix out = a;
    axpy_inplace(out, b, alpha);
    return out;
}

void axpy_inplace(Matrix& a, const Matrix& b, double alpha) {
    if (!a.same_shape(b)) shape_fail("add_scaled", a, b);
    auto ad = a.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += alpha * bd[i];
}

void scale_inplace(Matrix& a, double alpha) {
    for (double& v : a.data()) v *= alpha;
}

Matrix mean(std::span<const Matrix> items) {
    if (items.empty()) throw ShapeError("mean of an empty list");
    Matrix acc = items.front();
    for (std::size_t i = 1; i < items.size(); ++i) {
        if (!items[i].same_shape(acc)) shape_fail("mean", acc, items[i]);
        auto ad = acc.data();
        auto bd = items[i].data();
        for (std::size_t j = 0; j < ad.size(); ++j) ad[j] += bd[j];
    }
    if (items.size() > 1) {
        const double n = static_cast<double>(items.size());
        for (double& v : acc.data()) v /= n;
    }
    return acc;
}

Matrix weighted_mean(std::span<const Matrix> items, std::span<const double> weights) {
    if (items.empty()) throw ShapeError("weighted mean of an empty list");
    if (items.size() != weights.size()) throw ShapeError("weighted mean: weight count mismatch");
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw ShapeError("weighted mean: weights must sum to a positive value");
    Matrix acc(items.front().rows(), items.front().cols());
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (!items[i].same_shape(acc)) shape_fail("weighted_mean", acc, items[i]);
        axpy_inplace(acc, items[i], weights[i] / total);
    }
    return acc;
}

bool all_finite(const Matrix& m) noexcept {
    return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
}

std::uint64_t checksum_combine(std::uint64_t h, std::uint64_t v) noexcept {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xFFu;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::uint64_t checksum(const Matrix& m) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    h = checksum_combine(h, m.rows());
    h = checksum_combine(h, m.cols());
    for (double v : m.data()) h = checksum_combine(h, std::bit_cast<std::uint64_t>(v));
    return h;
}

}  // namespace fllab
