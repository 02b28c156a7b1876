// SPDX-License-Identifier: MIT
#include "ntdseg/tensor.hpp"

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

namespace ntdseg {
namespace {

Tensor3 index_tensor() {
    // entry (i, j, k) = i + 2j + 4k
    Tensor3 t({2, 2, 2});
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t k = 0; k < 2; ++k) t(i, j, k) = static_cast<double>(i + 2 * j + 4 * k);
    return t;
}

TEST(Tensor3Test, RejectsWrongValueCount) {
    EXPECT_THROW(Tensor3({2, 2, 2}, std::vector<double>(7, 0.0)), Error);
    EXPECT_THROW(Tensor3({0, 2, 2}), Error);
}

TEST(UnfoldTest, SingleEntry) {
    const Tensor3 t({1, 1, 1}, std::vector<double>{5.0});
    for (int mode = 1; mode <= 3; ++mode) {
        const Matrix m = unfold(t, mode);
        ASSERT_EQ(m.rows(), 1);
        ASSERT_EQ(m.cols(), 1);
        EXPECT_EQ(m(0, 0), 5.0);
    }
}

TEST(UnfoldTest, ModeOneOfIndexTensor) {
    // Columns enumerate (j, k) with j fastest: (0,0) (1,0) (0,1) (1,1).
    const Matrix m = unfold(index_tensor(), 1);
    ASSERT_EQ(m.rows(), 2);
    ASSERT_EQ(m.cols(), 4);
    const double row0[] = {0, 2, 4, 6};
    const double row1[] = {1, 3, 5, 7};
    for (int c = 0; c < 4; ++c) {
        EXPECT_EQ(m(0, c), row0[c]);
        EXPECT_EQ(m(1, c), row1[c]);
    }
}

TEST(UnfoldTest, FibersAreColumns) {
    std::mt19937_64 rng(3);
    const Tensor3 t = oracle::random_tensor({3, 4, 5}, rng);
    const Matrix m2 = unfold(t, 2);
    // Column i + k*3 of the mode-2 unfolding is the fiber t(i, :, k).
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 5; ++k)
            for (std::size_t j = 0; j < 4; ++j)
                EXPECT_EQ(m2(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i + 3 * k)), t(i, j, k));
}

TEST(UnfoldTest, InvalidMode) {
    const Tensor3 t({2, 2, 2});
    EXPECT_THROW(unfold(t, 0), Error);
    EXPECT_THROW(unfold(t, 4), Error);
}

TEST(UnfoldTest, FoldRoundTripRandomDims) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const Dims3 d{oracle::random_size(rng, 1, 8), oracle::random_size(rng, 1, 8), oracle::random_size(rng, 1, 8)};
        const Tensor3 t = oracle::random_tensor(d, rng, -1.0, 1.0);
        for (int mode = 1; mode <= 3; ++mode) EXPECT_EQ(fold(unfold(t, mode), mode, d), t);
    }
}

TEST(ModeProductTest, IdentityIsExact) {
    std::mt19937_64 rng(5);
    const Tensor3 t = oracle::random_tensor({3, 4, 5}, rng);
    for (int mode = 1; mode <= 3; ++mode) {
        const auto n = static_cast<Eigen::Index>(t.dim(static_cast<std::size_t>(mode - 1)));
        EXPECT_EQ(mode_product(t, Matrix::Identity(n, n), mode), t);
    }
}

TEST(ModeProductTest, DiagonalScalesSlice) {
    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 1.0;
    d(1, 1) = 2.0;
    const Tensor3 t = index_tensor();
    const Tensor3 out = mode_product(t, d, 1);
    EXPECT_EQ(out, oracle::mode_product_sum(t, d, 1));
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t k = 0; k < 2; ++k) {
            EXPECT_EQ(out(0, j, k), t(0, j, k));
            EXPECT_EQ(out(1, j, k), 2.0 * t(1, j, k));
        }
}

TEST(ModeProductTest, MatchesLoopOracleAllModes) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        const Dims3 d{oracle::random_size(rng, 1, 6), oracle::random_size(rng, 1, 6), oracle::random_size(rng, 1, 6)};
        const Tensor3 t = oracle::random_tensor(d, rng, -1.0, 1.0);
        for (int mode = 1; mode <= 3; ++mode) {
            const Matrix m = oracle::random_matrix(static_cast<Eigen::Index>(oracle::random_size(rng, 1, 5)),
                                                   static_cast<Eigen::Index>(d[static_cast<std::size_t>(mode - 1)]), rng, -1.0, 1.0);
            const Tensor3 expect = oracle::mode_product_sum(t, m, mode);
            EXPECT_LE(oracle::max_abs_diff(mode_product(t, m, mode), expect), 1e-12 * (1.0 + oracle::max_abs(expect)));
        }
    }
}

TEST(ModeProductTest, DistinctModesCommute) {
    std::mt19937_64 rng(13);
    const Tensor3 x = oracle::random_tensor({3, 4, 5}, rng);
    const Matrix a = oracle::random_matrix(6, 3, rng);
    const Matrix b = oracle::random_matrix(2, 4, rng);
    const Tensor3 ab = mode_product(mode_product(x, a, 1), b, 2);
    const Tensor3 ba = mode_product(mode_product(x, b, 2), a, 1);
    EXPECT_LE(oracle::relative_error(ab, ba), 1e-12);
}

TEST(ModeProductTest, DimensionMismatch) {
    const Tensor3 t({2, 3, 4});
    EXPECT_THROW(mode_product(t, Matrix::Identity(3, 3), 1), Error);
}

TEST(ReconstructTest, IdentityFactorsGiveCore) {
    std::mt19937_64 rng(17);
    const Tensor3 x = oracle::random_tensor({3, 4, 2}, rng);
    EXPECT_EQ(reconstruct(x, Matrix::Identity(3, 3), Matrix::Identity(4, 4), Matrix::Identity(2, 2)), x);
}

TEST(ReconstructTest, MatchesSixLoopOracle) {
    std::mt19937_64 rng(19);
    const Tensor3 g = oracle::random_tensor({2, 2, 2}, rng);
    const Matrix w = oracle::random_matrix(3, 2, rng);
    const Matrix h = oracle::random_matrix(3, 2, rng);
    const Matrix q = oracle::random_matrix(3, 2, rng);
    EXPECT_LE(oracle::relative_error(reconstruct(g, w, h, q), oracle::reconstruct_sum(g, w, h, q)), 1e-12);
}

TEST(ReconstructTest, BarSliceFormula) {
    std::mt19937_64 rng(23);
    const Tensor3 g = oracle::random_tensor({3, 4, 2}, rng);
    const Matrix w = oracle::random_matrix(5, 3, rng);
    const Matrix h = oracle::random_matrix(6, 4, rng);
    const Matrix q = oracle::random_matrix(7, 2, rng);
    const Tensor3 x = reconstruct(g, w, h, q);
    for (Eigen::Index b = 0; b < q.rows(); ++b) {
        Matrix mix = Matrix::Zero(3, 4);
        for (Eigen::Index bp = 0; bp < q.cols(); ++bp)
            for (Eigen::Index i = 0; i < 3; ++i)
                for (Eigen::Index j = 0; j < 4; ++j)
                    mix(i, j) += q(b, bp) * g(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(bp));
        const Matrix slice = w * mix * h.transpose();
        double num = 0.0, den = 0.0;
        for (Eigen::Index f = 0; f < 5; ++f)
            for (Eigen::Index t = 0; t < 6; ++t) {
                const double d = slice(f, t) - x(static_cast<std::size_t>(f), static_cast<std::size_t>(t), static_cast<std::size_t>(b));
                num += d * d;
                den += slice(f, t) * slice(f, t);
            }
        EXPECT_LE(std::sqrt(num / den), 1e-12);
    }
}

TEST(ReconstructTest, RandomInstancesAgainstOracle) {
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 50; ++trial) {
        const Dims3 r{oracle::random_size(rng, 1, 4), oracle::random_size(rng, 1, 4), oracle::random_size(rng, 1, 4)};
        const Tensor3 g = oracle::random_tensor(r, rng);
        const Matrix w = oracle::random_matrix(static_cast<Eigen::Index>(oracle::random_size(rng, 1, 6)), static_cast<Eigen::Index>(r[0]), rng);
        const Matrix h = oracle::random_matrix(static_cast<Eigen::Index>(oracle::random_size(rng, 1, 6)), static_cast<Eigen::Index>(r[1]), rng);
        const Matrix q = oracle::random_matrix(static_cast<Eigen::Index>(oracle::random_size(rng, 1, 6)), static_cast<Eigen::Index>(r[2]), rng);
        EXPECT_LE(oracle::relative_error(reconstruct(g, w, h, q), oracle::reconstruct_sum(g, w, h, q)), 1e-12);
    }
}

TEST(NormTest, Values) {
    EXPECT_EQ(frobenius_norm(Tensor3({2, 3, 4})), 0.0);
    EXPECT_EQ(frobenius_norm(Tensor3({1, 1, 2}, std::vector<double>{3.0, 4.0})), 5.0);
    std::mt19937_64 rng(31);
    const Tensor3 t = oracle::random_tensor({4, 5, 6}, rng, -2.0, 2.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            for (std::size_t k = 0; k < 6; ++k) acc += t(i, j, k) * t(i, j, k);
    EXPECT_NEAR(frobenius_norm(t), std::sqrt(acc), 1e-12 * std::sqrt(acc));
}

TEST(HosvdTest, DiagonalTensorFullRanks) {
    Tensor3 t({2, 2, 2});
    t(0, 0, 0) = 1.0;
    t(1, 1, 1) = 2.0;
    const TuckerFactors f = truncated_hosvd(t, {2, 2, 2}, /*absolute=*/false);
    EXPECT_LE(oracle::relative_error(reconstruct(f.core, f.w, f.h, f.q), t), 1e-14);
}

TEST(HosvdTest, RankOneNonnegativeAfterAbs) {
    std::mt19937_64 rng(37);
    const Matrix a = oracle::random_matrix(5, 1, rng, 0.1, 1.0);
    const Matrix b = oracle::random_matrix(6, 1, rng, 0.1, 1.0);
    const Matrix c = oracle::random_matrix(7, 1, rng, 0.1, 1.0);
    const Tensor3 x = reconstruct(Tensor3({1, 1, 1}, std::vector<double>{3.0}), a, b, c);
    const TuckerFactors f = truncated_hosvd(x, {1, 1, 1});
    EXPECT_TRUE(f.core.is_nonnegative());
    EXPECT_LE(oracle::relative_error(reconstruct(f.core, f.w, f.h, f.q), x), 1e-10);
}

TEST(HosvdTest, FullRanksReconstructRandom) {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        const Dims3 d{oracle::random_size(rng, 1, 7), oracle::random_size(rng, 1, 7), oracle::random_size(rng, 1, 7)};
        const Tensor3 x = oracle::random_tensor(d, rng);
        const TuckerFactors f = truncated_hosvd(x, d, false);
        EXPECT_LE(oracle::relative_error(reconstruct(f.core, f.w, f.h, f.q), x), 1e-10);
    }
}

TEST(HosvdTest, TruncationErrorShrinksWithRank) {
    std::mt19937_64 rng(43);
    const Tensor3 x = oracle::random_tensor({5, 6, 7}, rng);
    auto err = [&](Dims3 r) {
        const TuckerFactors f = truncated_hosvd(x, r, false);
        return oracle::relative_error(reconstruct(f.core, f.w, f.h, f.q), x);
    };
    for (std::size_t axis = 0; axis < 3; ++axis) {
        Dims3 r{2, 2, 2};
        double previous = err(r);
        for (std::size_t k = 3; k <= x.dim(axis); ++k) {
            r[axis] = k;
            const double current = err(r);
            EXPECT_LE(current, previous + 1e-12);
            previous = current;
        }
    }
}

TEST(HosvdTest, RankExceedsDimension) {
    const Tensor3 x({2, 3, 4}, 1.0);
    EXPECT_THROW(truncated_hosvd(x, {3, 1, 1}), Error);
    EXPECT_THROW(truncated_hosvd(x, {1, 1, 0}), Error);
}

}  // namespace
}  // namespace ntdseg
