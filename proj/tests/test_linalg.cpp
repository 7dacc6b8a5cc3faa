#include <gtest/gtest.h>

#include <cmath>

#include "fllab/error.hpp"
#include "fllab/linalg.hpp"
#include "oracles.hpp"

namespace fllab {
namespace {

TEST(Matrix, ShapeAndStorage) {
    Matrix m(2, 3);
    EXPECT_EQ(m.rows(), 2u);
    EXPECT_EQ(m.cols(), 3u);
    EXPECT_EQ(m.size(), 6u);
    for (double v : m.data()) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(Matrix(0, 3), ShapeError);
    EXPECT_THROW(Matrix(2, 2, std::vector<double>(3)), ShapeError);
}

TEST(Matrix, EqualityIsBitwise) {
    Matrix a{{0.0}};
    Matrix b{{-0.0}};
    EXPECT_FALSE(a == b);
    EXPECT_TRUE(a == Matrix{{0.0}});
}

TEST(Matmul, IdentityLeavesOperandUnchanged) {
    const Matrix b{{1, 2, 3}, {4, 5, 6}};
    EXPECT_EQ(matmul(Matrix::identity(2), b), b);
}

TEST(Matmul, ZeroRightOperand) {
    const Matrix a{{1, 2}, {3, 4}};
    const Matrix z{{0}, {0}};
    EXPECT_EQ(matmul(a, z), (Matrix{{0}, {0}}));
}

TEST(Matmul, MatchesTripleLoopExactly) {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = oracle::random_normal(3, 2, rng);
        const auto b = oracle::random_normal(2, 4, rng);
        EXPECT_EQ(matmul(a, b), oracle::naive_matmul(a, b));
    }
}

TEST(Matmul, TransposedVariantsAgreeWithOracle) {
    Rng rng(12);
    const auto a = oracle::random_normal(5, 3, rng);
    const auto b = oracle::random_normal(4, 3, rng);
    const auto c = oracle::random_normal(5, 2, rng);
    EXPECT_LE(oracle::max_abs_diff(matmul_nt(a, b), oracle::naive_matmul(a, oracle::naive_transpose(b))), 1e-14);
    EXPECT_LE(oracle::max_abs_diff(matmul_tn(a, c), oracle::naive_matmul(oracle::naive_transpose(a), c)), 1e-14);
}

TEST(Matmul, DimensionMismatchThrows) {
    EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
    EXPECT_THROW(matmul_nt(Matrix(2, 3), Matrix(2, 4)), ShapeError);
    EXPECT_THROW(matmul_tn(Matrix(2, 3), Matrix(3, 3)), ShapeError);
}

TEST(Matmul, AssociativeOnRandomTriples) {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t p = 1 + rng.below(6), q = 1 + rng.below(6), r = 1 + rng.below(6), s = 1 + rng.below(6);
        const auto a = oracle::random_normal(p, q, rng);
        const auto b = oracle::random_normal(q, r, rng);
        const auto c = oracle::random_normal(r, s, rng);
        const auto left = matmul(matmul(a, b), c);
        const auto right = matmul(a, matmul(b, c));
        const double scale = frobenius_norm(left) + 1.0;
        EXPECT_LE(frobenius_norm(add_scaled(left, right, -1.0)) / scale, 1e-12);
    }
}

TEST(Transpose, SwapsIndices) {
    const Matrix m{{1, 2, 3}, {4, 5, 6}};
    EXPECT_EQ(transpose(m), (Matrix{{1, 4}, {2, 5}, {3, 6}}));
    EXPECT_EQ(transpose(transpose(m)), m);
}

TEST(Kron, IdentityGivesBlockDiagonal) {
    const Matrix b{{1, 2}, {3, 4}};
    const Matrix expected{{1, 2, 0, 0}, {3, 4, 0, 0}, {0, 0, 1, 2}, {0, 0, 3, 4}};
    EXPECT_EQ(kron(Matrix::identity(2), b), expected);
}

TEST(Kron, ScalarScales) {
    const Matrix b{{1, -2}, {0.5, 4}};
    EXPECT_EQ(kron(Matrix{{2}}, b), (Matrix{{2, -4}, {1, 8}}));
}

TEST(Kron, MatchesEntrywiseDefinition) {
    Rng rng(14);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = oracle::random_normal(1 + rng.below(4), 1 + rng.below(4), rng);
        const auto b = oracle::random_normal(1 + rng.below(4), 1 + rng.below(4), rng);
        EXPECT_EQ(kron(a, b), oracle::naive_kron(a, b));
    }
}

TEST(Kron, RankMultiplies2x2By3x3) {
    Rng rng(15);
    for (std::size_t ra = 0; ra <= 2; ++ra)
        for (std::size_t rb = 0; rb <= 3; ++rb) {
            const auto a = oracle::random_rank(2, 2, ra, rng);
            const auto b = oracle::random_rank(3, 3, rb, rng);
            EXPECT_EQ(rank(a, 1e-9), ra);
            EXPECT_EQ(rank(b, 1e-9), rb);
            EXPECT_EQ(rank(kron(a, b), 1e-9), ra * rb) << "ra=" << ra << " rb=" << rb;
        }
}

TEST(Kron, RankMultipliesUpTo4x4) {
    Rng rng(16);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t ar = 1 + rng.below(4), ac = 1 + rng.below(4);
        const std::size_t br = 1 + rng.below(4), bc = 1 + rng.below(4);
        const std::size_t ra = rng.below(std::min(ar, ac) + 1);
        const std::size_t rb = rng.below(std::min(br, bc) + 1);
        const auto a = oracle::random_rank(ar, ac, ra, rng);
        const auto b = oracle::random_rank(br, bc, rb, rng);
        EXPECT_EQ(rank(kron(a, b), 1e-9), rank(a, 1e-9) * rank(b, 1e-9));
        EXPECT_EQ(rank(a, 1e-9), ra);
    }
}

TEST(Rank, TrivialCases) {
    EXPECT_EQ(rank(Matrix(3, 4), 1e-9), 0u);
    EXPECT_EQ(rank(Matrix::identity(4), 1e-9), 4u);
}

TEST(Rank, OuterProductIsRankOne) {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const auto u = oracle::random_normal(5, 1, rng);
        const auto v = oracle::random_normal(4, 1, rng);
        EXPECT_EQ(rank(oracle::naive_matmul(u, oracle::naive_transpose(v)), 1e-9), 1u);
    }
}

TEST(Rank, ConstructedRankRecovered) {
    Rng rng(18);
    for (std::size_t r = 0; r <= 6; ++r) EXPECT_EQ(rank(oracle::random_rank(6, 9, r, rng), 1e-9), r);
}

TEST(ReshapeTruncate, OwnShapeIsIdentity) {
    const Matrix m{{1, 2}, {3, 4}};
    EXPECT_EQ(reshape_truncate(m, 2, 2), m);
    Rng rng(19);
    const auto r = oracle::random_normal(3, 7, rng);
    EXPECT_EQ(reshape_truncate(r, 3, 7), r);
}

TEST(ReshapeTruncate, TakesLeadingRowMajorEntries) {
    const Matrix src{{1, 2, 3}, {4, 5, 6}};
    EXPECT_EQ(reshape_truncate(src, 2, 2), (Matrix{{1, 2}, {3, 4}}));

    Matrix sq(4, 4);
    for (std::size_t i = 0; i < 16; ++i) sq.data()[i] = static_cast<double>(i + 1);
    const auto out = reshape_truncate(sq, 3, 5);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(out(r, c), static_cast<double>(r * 5 + c + 1));
}

TEST(ReshapeTruncate, InsufficientEntriesThrows) {
    EXPECT_THROW(reshape_truncate(Matrix(2, 2), 1, 5), ShapeError);
}

TEST(ScatterLeading, IsAdjointOfTruncation) {
    // <reshape_truncate(X), Y> == <X, scatter_leading(Y)>
    Rng rng(20);
    const auto x = oracle::random_normal(4, 4, rng);
    const auto y = oracle::random_normal(3, 5, rng);
    const auto tx = reshape_truncate(x, 3, 5);
    const auto sy = scatter_leading(y, 4, 4);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < tx.size(); ++i) lhs += tx.data()[i] * y.data()[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x.data()[i] * sy.data()[i];
    EXPECT_NEAR(lhs, rhs, 1e-12);
    EXPECT_EQ(sy.data()[15], 0.0);
}

TEST(FillUniform, ZeroBoundGivesZeros) {
    Rng rng(1);
    const auto m = fill_uniform(3, 3, 0.0, rng);
    for (double v : m.data()) EXPECT_EQ(v, 0.0);
}

TEST(FillUniform, SameSeedSameMatrix) {
    Rng a(99), b(99);
    EXPECT_EQ(fill_uniform(4, 5, 0.3, a), fill_uniform(4, 5, 0.3, b));
}

TEST(FillUniform, BoundAndMean) {
    Rng rng(2024);
    const auto m = fill_uniform(100, 100, 0.1, rng);
    double max_abs = 0.0, sum = 0.0;
    for (double v : m.data()) {
        max_abs = std::max(max_abs, std::abs(v));
        sum += v;
    }
    EXPECT_LE(max_abs, 0.1);
    EXPECT_LE(std::abs(sum / 1e4), 0.01);
}

TEST(Elementwise, MeanOfSingleIsItself) {
    Rng rng(3);
    const auto a = oracle::random_normal(3, 3, rng);
    const Matrix items[] = {a};
    EXPECT_EQ(mean(items), a);
}

TEST(Elementwise, AddScaledSelfNegationIsZero) {
    Rng rng(4);
    const auto a = oracle::random_normal(3, 2, rng);
    const auto z = add_scaled(a, a, -1.0);
    for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Elementwise, MeanOfTwoByHand) {
    const Matrix items[] = {Matrix{{1, 2}, {3, 4}}, Matrix{{3, -2}, {0, 5}}};
    EXPECT_EQ(mean(items), (Matrix{{2, 0}, {1.5, 4.5}}));
}

TEST(Elementwise, WeightedMeanNormalizes) {
    const Matrix items[] = {Matrix{{1.0}}, Matrix{{4.0}}};
    const double w[] = {2.0, 1.0};
    EXPECT_DOUBLE_EQ(weighted_mean(items, w)(0, 0), 2.0);
}

TEST(Elementwise, ShapeErrors) {
    const Matrix items[] = {Matrix(2, 2), Matrix(2, 3)};
    EXPECT_THROW(mean(items), ShapeError);
    EXPECT_THROW(mean(std::span<const Matrix>{}), ShapeError);
    EXPECT_THROW(add_scaled(Matrix(1, 2), Matrix(2, 1), 1.0), ShapeError);
}

TEST(Elementwise, FrobeniusNorm) {
    EXPECT_DOUBLE_EQ(frobenius_norm(Matrix{{3, 0}, {0, 4}}), 5.0);
}

TEST(Checksum, SensitiveToShapeAndBits) {
    const Matrix a(2, 3), b(3, 2);
    EXPECT_NE(checksum(a), checksum(b));
    Matrix c(2, 3);
    c(1, 2) = 1e-300;
    EXPECT_NE(checksum(a), checksum(c));
    EXPECT_EQ(checksum(a), checksum(Matrix(2, 3)));
}

}  // namespace
}  // namespace fllab
