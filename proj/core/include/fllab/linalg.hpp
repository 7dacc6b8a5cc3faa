#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fllab/rng.hpp"

namespace fllab {

/// Dense row-major matrix of doubles.
///
/// A default-constructed Matrix is empty (0x0) and only useful as a
/// placeholder; every sized constructor requires rows, cols >= 1.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }
    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    /// Bitwise equality (shape and every stored double, including sign of zero).
    friend bool operator==(const Matrix& a, const Matrix& b) noexcept;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

/// Kronecker product. Entry ((p*b.rows + i), (q*b.cols + j)) = a(p,q) * b(i,j).
Matrix kron(const Matrix& a, const Matrix& b);

/// Number of pivots found by Gaussian elimination with partial pivoting; a
/// pivot with |pivot| <= tol * max|entry| counts as zero.
std::size_t rank(const Matrix& m, double tol);

/// First rows*cols entries of src in row-major order, reshaped.
Matrix reshape_truncate(const Matrix& src, std::size_t rows, std::size_t cols);

/// Adjoint of reshape_truncate: src's entries land in the leading row-major
/// slots of a zero (rows, cols) matrix.
Matrix scatter_leading(const Matrix& src, std::size_t rows, std::size_t cols);

/// i.i.d. uniform entries in [-bound, bound], drawn in row-major order.
Matrix fill_uniform(std::size_t rows, std::size_t cols, double bound, Rng& rng);

double frobenius_norm(const Matrix& m);

/// a + alpha * b
Matrix add_scaled(const Matrix& a, const Matrix& b, double alpha);
/// a += alpha * b
void axpy_inplace(Matrix& a, const Matrix& b, double alpha);
void scale_inplace(Matrix& a, double alpha);

/// Elementwise arithmetic mean, accumulated in list order.
Matrix mean(std::span<const Matrix> items);
/// Weighted mean with weights normalized to sum to one.
Matrix weighted_mean(std::span<const Matrix> items, std::span<const double> weights);

bool all_finite(const Matrix& m) noexcept;

/// FNV-1a over shape and raw bytes. Stable across platforms with the same
/// endianness; used to compare seed-regenerated matrices across clients.
std::uint64_t checksum(const Matrix& m) noexcept;
std::uint64_t checksum_combine(std::uint64_t h, std::uint64_t v) noexcept;

}  // namespace fllab
