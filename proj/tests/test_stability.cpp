#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace rlq;
using fixtures::scalar;

TEST(WeightedStable, ScalarExamples) {
    auto v = is_weighted_stable(scalar(0), scalar(0), 1, 0);
    EXPECT_TRUE(v.stable);
    EXPECT_NEAR((*v.P)(0, 0), 1.0, 1e-14);

    v = is_weighted_stable(scalar(1), scalar(0), 1, 0);
    EXPECT_FALSE(v.stable);
    EXPECT_FALSE(v.reason.empty());

    v = is_weighted_stable(scalar(0.2), scalar(0), 1, 0);
    EXPECT_TRUE(v.stable);
    EXPECT_TRUE(v.sufficient_holds);
}

TEST(WeightedStable, SufficientConditionIsOnlySufficient) {
    // Scalar instances make the inequality exact, so take a non-normal A:
    // Hurwitz, but A + A' has eigenvalue 8.
    Matrix A(2, 2);
    A << -1, 10, 0, -1;
    const auto v = is_weighted_stable(A, Matrix::Zero(2, 2), 0.1, 0);
    EXPECT_TRUE(v.stable);
    EXPECT_FALSE(v.sufficient_holds);
}

TEST(Stabilizer, ScalarExamples) {
    const ProblemSpec spec = fixtures::scalar_instance(1, 1, 0, 0, 1, 0, 1, 1);
    EXPECT_TRUE(is_stabilizer(scalar(-1), spec).stable);
    EXPECT_FALSE(is_stabilizer(scalar(0), spec).stable);
    EXPECT_TRUE(is_stabilizer(scalar(0), fixtures::value_instance()).stable);
}

TEST(FindStabilizer, ZeroWhenAlreadyStable) {
    EXPECT_EQ(find_stabilizer(fixtures::value_instance()).norm(), 0.0);
}

TEST(FindStabilizer, ScalarUnstable) {
    const ProblemSpec spec = fixtures::scalar_instance(1, 1, 0, 0, 1, 0, 1, 1);
    const Matrix Theta = find_stabilizer(spec);
    EXPECT_LT(Theta(0, 0), -0.5);
    EXPECT_TRUE(is_stabilizer(Theta, spec).stable);
}

TEST(FindStabilizer, NoInputMeansNotFound) {
    const ProblemSpec spec = fixtures::scalar_instance(1, 0, 0, 0, 1, 0, 1, 1);
    try {
        find_stabilizer(spec, 20);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotFound);
    }
}

TEST(FindStabilizer, MatrixInstancesWithNoise) {
    std::mt19937_64 gen(5);
    int found = 0;
    for (int trial = 0; trial < 10; ++trial) {
        ProblemData d;
        d.A = fixtures::random_matrix(gen, 3, 3) + 1.5 * identity(3);
        d.B = fixtures::random_matrix(gen, 3, 2);
        d.C = fixtures::random_matrix(gen, 3, 3, 0.2);
        d.D = fixtures::random_matrix(gen, 3, 2, 0.1);
        d.E = 0.5;
        d.F = 0.3;
        d.Q = identity(3);
        d.S = Matrix::Zero(2, 3);
        d.R = identity(2);
        d.x0 = Vector::Ones(3);
        const ProblemSpec spec(d);
        ASSERT_FALSE(is_stabilizer(Matrix::Zero(2, 3), spec).stable);
        const Matrix Theta = find_stabilizer(spec);
        EXPECT_TRUE(is_stabilizer(Theta, spec).stable);
        ++found;
    }
    EXPECT_EQ(found, 10);
}

TEST(Oracle, DeterministicScalarInstances) {
    OracleOptions opt;
    opt.n_paths = 100;
    opt.T_max = 30.0;
    auto r = lyapunov_mc_oracle({scalar(0), scalar(0), 1, 0, scalar(1)}, opt);
    EXPECT_NEAR(r.P(0, 0), 1.0, 1e-6);
    EXPECT_EQ(r.se(0, 0), 0.0);

    r = lyapunov_mc_oracle({scalar(0.2), scalar(0), 1, 0, scalar(1)}, opt);
    EXPECT_NEAR(r.P(0, 0), 1.0 / 0.6, 5e-3);

    r = lyapunov_mc_oracle({scalar(0.2), scalar(0), 1, 0, scalar(0)}, opt);
    EXPECT_EQ(r.P(0, 0), 0.0);
}

TEST(Oracle, NoisyInstanceWithinThreeSE) {
    OracleOptions opt;
    opt.n_paths = 4000;
    opt.dt = 2e-3;
    opt.seed = 3;
    const LyapunovProblem prob{scalar(0), scalar(0.5), 1, 1, scalar(1)};
    const double exact = solve_lyapunov(prob)(0, 0);
    EXPECT_NEAR(exact, 1.0 / 1.75, 1e-14);
    const auto r = lyapunov_mc_oracle(prob, opt);
    EXPECT_LE(std::abs(r.P(0, 0) - exact), 3.0 * r.se(0, 0) + 2e-3) << "se " << r.se(0, 0);
}

TEST(Oracle, IndependentOfWorkerCount) {
    OracleOptions opt;
    opt.n_paths = 64;
    opt.T_max = 5.0;
    opt.dt = 1e-2;
    const LyapunovProblem prob{scalar(-0.2), scalar(0.5), 1, 1, scalar(1)};
    setenv("RLQ_THREADS", "1", 1);
    const auto a = lyapunov_mc_oracle(prob, opt);
    setenv("RLQ_THREADS", "3", 1);
    const auto b = lyapunov_mc_oracle(prob, opt);
    unsetenv("RLQ_THREADS");
    EXPECT_EQ(a.P(0, 0), b.P(0, 0));
    EXPECT_EQ(a.se(0, 0), b.se(0, 0));
    EXPECT_EQ(a.tail_estimate, b.tail_estimate);
}

TEST(Oracle, DivergenceDetected) {
    OracleOptions opt;
    opt.n_paths = 2;
    opt.T_max = 200.0;
    opt.dt = 1e-2;
    try {
        lyapunov_mc_oracle({scalar(1.0), scalar(0), 0.1, 0, scalar(1)}, opt);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DivergenceDetected);
    }
}
