#include <gtest/gtest.h>

#include <random>

#include "mvreplica/optimizer.hpp"

using namespace mvreplica;

namespace {

CovMatrix random_psd(std::mt19937_64& rng, int n, int rank) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd x(n, rank);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < rank; ++j) x(i, j) = g(rng);
    return CovMatrix(x * x.transpose() / rank);
}

}  // namespace

TEST(CovMatrix, Validation) {
    Eigen::Matrix2d asym;
    asym << 1, 0.5, 0.4, 1;
    EXPECT_THROW(CovMatrix{asym}, MatrixError);
    Eigen::Matrix2d indefinite;
    indefinite << 1, 2, 2, 1;
    EXPECT_THROW(CovMatrix{indefinite}, MatrixError);
    Eigen::Matrix2d nan;
    nan << 1, 0, 0, std::nan("");
    EXPECT_THROW(CovMatrix{nan}, MatrixError);
    EXPECT_NO_THROW(CovMatrix{Eigen::Matrix2d::Identity()});
}

TEST(Equality, DiagonalInverseVariance) {
    Eigen::Vector3d d(1.0, 2.0, 4.0);
    const CovMatrix c(d.asDiagonal().toDenseMatrix());
    const auto r = min_variance_equality(c, 3.0);
    const Eigen::Vector3d inv = d.cwiseInverse();
    const Eigen::Vector3d expect = 3.0 * inv / inv.sum();
    EXPECT_LT((r.weights - expect).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(r.objective, 9.0 / inv.sum(), 1e-12);
    EXPECT_FALSE(r.degenerate);
    EXPECT_LT(kkt_residual(c, r, 3.0, Constraint::Equality), 1e-12);
}

TEST(Equality, RankDeficientIsFlagged) {
    std::mt19937_64 rng(3);
    const auto c = random_psd(rng, 8, 5);
    const auto r = min_variance_equality(c, 8.0);
    EXPECT_TRUE(r.degenerate);
    EXPECT_FALSE(r.unique);
    EXPECT_EQ(r.flat_directions, 3);
    EXPECT_NEAR(r.weights.sum(), 8.0, 1e-10);
    EXPECT_LT(r.objective, 1e-10);
}

TEST(NoShort, PinsTheHedgeAsset) {
    // Strongly correlated pair: the unconstrained optimum shorts asset 1.
    Eigen::Matrix2d m;
    m << 1.0, 1.2, 1.2, 2.0;
    const CovMatrix c(m);
    EXPECT_LT(min_variance_equality(c, 1.0).weights[1], 0.0);
    const auto r = min_variance_noshort(c, 1.0);
    EXPECT_NEAR(r.weights[0], 1.0, 1e-14);
    EXPECT_EQ(r.weights[1], 0.0);
    ASSERT_EQ(r.active_set.size(), 1u);
    EXPECT_EQ(r.active_set[0], 1);
    EXPECT_LT(kkt_residual(c, r, 1.0), 1e-12);
}

TEST(NoShort, MatchesBruteForce) {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> dim(2, 8);
    for (int k = 0; k < 200; ++k) {
        const int n = dim(rng);
        const int rank = std::uniform_int_distribution<int>(1, n + 2)(rng);
        const auto c = random_psd(rng, n, rank);
        const auto a = min_variance_noshort(c, n);
        const auto b = brute_force_noshort(c, n);
        EXPECT_NEAR(a.objective, b.objective, 1e-10 * std::max(1.0, b.objective)) << k;
        EXPECT_LT(kkt_residual(c, a, n), 1e-8) << k;
        EXPECT_GE(a.weights.minCoeff(), 0.0);
    }
}

TEST(NoShort, InputChecks) {
    const CovMatrix c(Eigen::Matrix3d::Identity());
    EXPECT_THROW(min_variance_noshort(c, 0.0), std::exception);
    EXPECT_THROW(brute_force_noshort(CovMatrix(Eigen::MatrixXd::Identity(13, 13)), 1.0), DomainError);
}

TEST(NoShort, ZeroVarianceWhenShortSample) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    int zero = 0;
    for (int k = 0; k < 20; ++k) {
        Eigen::MatrixXd x(40, 10);
        for (int i = 0; i < 40; ++i)
            for (int t = 0; t < 10; ++t) x(i, t) = g(rng);
        const auto c = CovMatrix::from_returns(x);
        const auto r = min_variance_noshort(c, 40.0);
        EXPECT_LT(kkt_residual(c, r, 40.0), 1e-8);
        zero += r.degenerate;
    }
    EXPECT_GT(zero, 15);
}
