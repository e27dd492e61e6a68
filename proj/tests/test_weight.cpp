#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"

using namespace rlq;

TEST(Weight, MuExactExamples) {
    EXPECT_EQ(mu_exact(3.0, 3.0, 0.7, {1.0, 2.0}), std::exp(-2.0 * 0.7));
    EXPECT_EQ(mu_exact(3.0, 3.0, 0.0, {1.0, 2.0}), 1.0);
    EXPECT_NEAR(mu_exact(1.0, 0.0, 0.3, {2.0, 0.0}), std::exp(-2.0), 1e-15);
    EXPECT_NEAR(mu_exact(1.0, 0.0, 0.0, {1.0, 1.0}), std::exp(-1.5), 1e-15);
}

TEST(Weight, MuMean) {
    EXPECT_NEAR(mu_mean(1.0, 0.0, {1.0, 0.0}), 0.367879441171, 1e-12);
    EXPECT_EQ(mu_mean(2.0, 2.0, {2.0, 5.0}), 1.0);
}

TEST(Weight, MuMeanMonteCarlo) {
    for (std::size_t N : {10000u, 100000u}) {
        std::vector<double> samples(N);
        for (std::size_t p = 0; p < N; ++p) {
            PathRng rng(7, p);
            samples[p] = mu_exact(1.0, 0.0, brownian_increment(rng, 1.0, 0), {1.0, 1.0});
        }
        const MeanAndError ms = mean_and_se(samples);
        EXPECT_LE(std::abs(ms.mean - std::exp(-1.0)), 3.0 * ms.se) << "N=" << N;
    }
}

TEST(Weight, ExponentCondition) {
    EXPECT_TRUE(check_exponent_condition(2.0, {1.0, 1.0}));
    EXPECT_FALSE(check_exponent_condition(2.0, {1.0, 2.0}));
    EXPECT_TRUE(check_exponent_condition(1.5001, {1.0, 1.0}));
    EXPECT_THROW(check_exponent_condition(2.0, {0.0, 1.0}), Error);
}

TEST(Weight, NuExponent) {
    EXPECT_EQ(nu_exponent(1.0, 1.0, 0.0, {2.0, 2.0}), 0.0);
    EXPECT_DOUBLE_EQ(nu_exponent(1.0, 0.0, 0.0, {2.0, 2.0}), -2.0);
    std::mt19937_64 gen(3);
    std::normal_distribution<double> normal;
    for (int i = 0; i < 200; ++i) {
        const WeightParams p{std::abs(normal(gen)), std::abs(normal(gen))};
        const double ds = std::abs(normal(gen));
        const double w = normal(gen) * std::sqrt(ds);
        const double lhs = std::exp(2.0 * nu_exponent(ds, 0.0, w, p));
        EXPECT_NEAR(lhs / mu_exact(ds, 0.0, w, p), 1.0, 1e-14);
    }
}

TEST(Weight, PathwiseMultiplicativity) {
    const WeightParams p{1.3, 0.8};
    const auto g = BrownianGrid::sample(uniform_grid(0.0, 5.0, 0.01), 11, 0);
    for (std::size_t i : {10u, 100u, 250u}) {
        for (std::size_t j : {260u, 400u, 500u}) {
            const double direct = mu_exact(g.t[j], g.t[0], g.W[j] - g.W[0], p);
            const double split = mu_exact(g.t[j], g.t[i], g.W[j] - g.W[i], p) * mu_exact(g.t[i], g.t[0], g.W[i] - g.W[0], p);
            EXPECT_NEAR(split / direct, 1.0, 1e-12);
        }
    }
}

TEST(Weight, BrownianGridReproducibleAndRefinable) {
    const auto a = BrownianGrid::sample(uniform_grid(0.0, 1.0, 0.1), 5, 3);
    const auto b = BrownianGrid::sample(uniform_grid(0.0, 1.0, 0.1), 5, 3);
    EXPECT_EQ(a.W, b.W);
    EXPECT_EQ(a.W[0], 0.0);
    // A coarse grid with one refinement level sees the fine path at every other node.
    const auto coarse = BrownianGrid::sample(uniform_grid(0.0, 1.0, 0.1), 5, 3, 1);
    const auto fine = BrownianGrid::sample(uniform_grid(0.0, 1.0, 0.05), 5, 3, 0);
    for (std::size_t k = 0; k < coarse.size(); ++k) EXPECT_NEAR(coarse.W[k], fine.W[2 * k], 1e-14);
}

TEST(Weight, IncrementVariance) {
    const std::size_t N = 50000;
    std::vector<double> sq(N);
    for (std::size_t p = 0; p < N; ++p) {
        PathRng rng(1, p);
        const double w = brownian_increment(rng, 0.25, 0);
        sq[p] = w * w;
    }
    const MeanAndError ms = mean_and_se(sq);
    EXPECT_LE(std::abs(ms.mean - 0.25), 4.0 * ms.se);
}

TEST(Weight, LogMuPathAvoidsUnderflow) {
    const auto g = BrownianGrid::sample(uniform_grid(0.0, 2000.0, 1.0), 2, 0);
    const auto lm = log_mu_path(g, {1.0, 0.5});
    EXPECT_TRUE(std::isfinite(lm.back()));
    EXPECT_LT(lm.back(), -1000.0);
}
