#include <gtest/gtest.h>

#include <cmath>

#include "mvreplica/mc.hpp"

using namespace mvreplica;

TEST(Philox, KnownAnswers) {
    using C = Philox4x32::Counter;
    EXPECT_EQ(Philox4x32({0u, 0u}).block({0u, 0u, 0u, 0u}), (C{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
    EXPECT_EQ(Philox4x32({0xffffffffu, 0xffffffffu}).block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}),
              (C{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
    EXPECT_EQ(Philox4x32({0xa4093822u, 0x299f31d0u}).block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}),
              (C{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Philox, NormalMoments) {
    const auto g = Philox4x32::from_seed(99);
    double s1 = 0, s2 = 0, s4 = 0;
    const int n = 100000;
    for (std::uint32_t k = 0; k < n / 2; ++k) {
        for (double z : g.normal_pair({k, 0u, 0u, 0u})) {
            s1 += z;
            s2 += z * z;
            s4 += z * z * z * z;
        }
    }
    EXPECT_NEAR(s1 / n, 0.0, 4.0 / std::sqrt(n));
    EXPECT_NEAR(s2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
    EXPECT_NEAR(s4 / n, 3.0, 4.0 * std::sqrt(96.0 / n));
}

TEST(Returns, ScaleAndDeterminism) {
    const AssetUniverse u({1.0, 3.0});
    const TrialConfig cfg{u, 20000, Constraint::NoShort, 4, 0};
    const auto x = generate_returns(cfg);
    EXPECT_EQ(x, generate_returns(cfg));
    EXPECT_NEAR(x.row(0).squaredNorm() / 20000, 1.0 / 2.0, 0.02);
    EXPECT_NEAR(x.row(1).squaredNorm() / 20000, 9.0 / 2.0, 0.2);
    TrialConfig other = cfg;
    other.trial_index = 1;
    EXPECT_NE(x, generate_returns(other));
    other = cfg;
    other.seed = 5;
    EXPECT_NE(x, generate_returns(other));
}

TEST(Trial, NoShortMetricsConsistent) {
    const TrialConfig cfg{AssetUniverse::uniform(30), 30, Constraint::NoShort, 1, 2};
    const auto m = run_trial(cfg, {true, false});
    ASSERT_EQ(m.weights.size(), 30u);
    double sum = 0;
    for (double w : m.weights) {
        EXPECT_GE(w, 0.0);
        sum += w;
    }
    EXPECT_NEAR(sum, 30.0, 1e-9);
    EXPECT_NEAR(m.lambda_hat, m.objective / cfg.r(), 1e-14);
    EXPECT_GT(m.zero_fraction, 0.0);
    EXPECT_GT(m.q0_tilde_hat, 1.0);
}

TEST(Sweep, ThreadCountDoesNotChangeResults) {
    SweepOptions opt;
    opt.trials = 12;
    opt.seed = 77;
    const auto u = AssetUniverse::uniform(20);
    opt.threads = 1;
    const auto a = sweep({0.5, 1.5}, u, opt);
    opt.threads = 3;
    const auto b = sweep({0.5, 1.5}, u, opt);
    for (std::size_t k = 0; k < 2; ++k) {
        EXPECT_EQ(a.points[k].lambda_hat.mean, b.points[k].lambda_hat.mean);
        EXPECT_EQ(a.points[k].q0_tilde_hat.se, b.points[k].q0_tilde_hat.se);
        EXPECT_EQ(a.points[k].degenerate_count, b.points[k].degenerate_count);
    }
    EXPECT_EQ(a.points[1].T, 13u);
    EXPECT_DOUBLE_EQ(a.points[1].r, 20.0 / 13.0);
}

TEST(Sweep, EqualityBeyondOneIsAlwaysDegenerate) {
    SweepOptions opt;
    opt.trials = 10;
    opt.constraint = Constraint::Equality;
    const auto s = sweep({1.25}, AssetUniverse::uniform(40), opt);
    EXPECT_EQ(s.points[0].degenerate_count, 10u);
    EXPECT_EQ(s.points[0].zero_variance_probability, 1.0);
}

TEST(Sweep, RejectsBadInput) {
    SweepOptions opt;
    EXPECT_THROW(sweep({}, AssetUniverse::uniform(5), opt), std::invalid_argument);
    EXPECT_THROW(sweep({-1.0}, AssetUniverse::uniform(5), opt), std::invalid_argument);
    opt.trials = 1;
    EXPECT_THROW(sweep({1.0}, AssetUniverse::uniform(5), opt), std::invalid_argument);
}

TEST(Histogram, MassesSumToOne) {
    SweepOptions opt;
    opt.trials = 20;
    opt.keep_weights = true;
    const auto s = sweep({1.0}, AssetUniverse::uniform(40), opt);
    const auto h = weight_histogram(s.points[0], 0.1);
    double total = h.atom_mass;
    for (const auto& b : h.bins) {
        total += b.mass;
        EXPECT_GE(b.lo, 0.0);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_NEAR(h.atom_mass, s.points[0].zero_fraction.mean, 1e-12);
    EXPECT_THROW(weight_histogram(s.points[0], 0.0), std::invalid_argument);
}

TEST(Phase, ProbabilityBounds) {
    const auto p = zero_variance_probability({0.5, 3.0}, 20, 20, 1);
    EXPECT_EQ(p[0].probability, 0.0);
    EXPECT_GT(p[1].probability, 0.5);
}
