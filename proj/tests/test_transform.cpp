#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace rlq;
using fixtures::scalar;

TEST(ToClassical, ScalarExamples) {
    auto ts = to_classical(scalar(0), scalar(1), scalar(0), scalar(0), 2, 0);
    EXPECT_EQ(ts.At(0, 0), -1.0);
    EXPECT_EQ(ts.Bt(0, 0), 1.0);
    EXPECT_EQ(ts.Ct(0, 0), 0.0);
    EXPECT_EQ(ts.Dt(0, 0), 0.0);

    ts = to_classical(scalar(1), scalar(1), scalar(2), scalar(1), 2, 2);
    EXPECT_DOUBLE_EQ(ts.At(0, 0), -2.5);
    EXPECT_DOUBLE_EQ(ts.Bt(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(ts.Ct(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(ts.Dt(0, 0), 1.0);

    const auto back = from_classical(ts, 2, 2);
    EXPECT_DOUBLE_EQ(back.A(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(back.B(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(back.C(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(back.D(0, 0), 1.0);
}

TEST(ToClassical, IdentityWhenUnweighted) {
    std::mt19937_64 gen(1);
    const Matrix A = fixtures::random_matrix(gen, 3, 3), B = fixtures::random_matrix(gen, 3, 2);
    const Matrix C = fixtures::random_matrix(gen, 3, 3), D = fixtures::random_matrix(gen, 3, 2);
    const auto ts = to_classical(A, B, C, D, 0, 0);
    EXPECT_EQ(ts.At, A);
    EXPECT_EQ(ts.Bt, B);
    EXPECT_EQ(ts.Ct, C);
    EXPECT_EQ(ts.Dt, D);
}

TEST(ToClassical, RoundTripRandom) {
    std::mt19937_64 gen(2);
    for (int i = 0; i < 50; ++i) {
        const Eigen::Index n = 1 + i % 4, m = 1 + i % 3;
        const Matrix A = fixtures::random_matrix(gen, n, n), B = fixtures::random_matrix(gen, n, m);
        const Matrix C = fixtures::random_matrix(gen, n, n), D = fixtures::random_matrix(gen, n, m);
        const double E = 0.1 + i * 0.05, F = 0.03 * i;
        const auto back = from_classical(to_classical(A, B, C, D, E, F), E, F);
        EXPECT_LE((back.A - A).norm(), 1e-13 * (1 + A.norm()));
        EXPECT_LE((back.B - B).norm(), 1e-14 * (1 + B.norm()));
        EXPECT_LE((back.C - C).norm(), 1e-14 * (1 + C.norm()));
        EXPECT_EQ(back.D, D);
    }
}

TEST(MapPaths, RoundTripAndScaling) {
    const auto g = BrownianGrid::sample(uniform_grid(0.0, 1.0, 0.1), 4, 0);
    const WeightParams wp{2.0, 0.0};
    std::vector<double> nu(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) nu[k] = nu_exponent(g.t[k], 0.0, g.W[k], wp);
    std::mt19937_64 gen(3);
    const PathMatrix X = fixtures::random_matrix(gen, 2, static_cast<Eigen::Index>(g.size()));
    const PathMatrix u = fixtures::random_matrix(gen, 1, static_cast<Eigen::Index>(g.size()));
    const auto mapped = map_state_control_path(X, u, nu);
    EXPECT_EQ(mapped.first.col(0), X.col(0));
    for (std::size_t k = 0; k < g.size(); ++k)
        EXPECT_NEAR(mapped.first(0, static_cast<Eigen::Index>(k)), std::exp(-g.t[k]) * X(0, static_cast<Eigen::Index>(k)), 1e-14);
    const auto back = unmap_state_control_path(mapped.first, mapped.second, nu);
    EXPECT_LE((back.first - X).norm(), 1e-14 * X.norm());
    EXPECT_LE((back.second - u).norm(), 1e-14 * u.norm());
}

TEST(MapPaths, GridMismatch) {
    const std::vector<double> nu(3, 0.0);
    try {
        map_state_control_path(Matrix::Zero(1, 4), Matrix::Zero(1, 4), nu);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::GridMismatch);
    }
    EXPECT_THROW(map_adjoint(Matrix::Zero(1, 3), Matrix::Zero(1, 2), nu, 1.0), Error);
}

TEST(MapAdjoint, Examples) {
    std::mt19937_64 gen(8);
    const std::vector<double> nu_tilde = {0.0, 0.3, -0.2};
    const PathMatrix Yt = fixtures::random_matrix(gen, 2, 3), Zt = fixtures::random_matrix(gen, 2, 3);
    auto yz = map_adjoint(Yt, Zt, nu_tilde, 0.0);
    for (Eigen::Index k = 0; k < 3; ++k) {
        EXPECT_LE((yz.first.col(k) - std::exp(nu_tilde[static_cast<std::size_t>(k)]) * Yt.col(k)).norm(), 1e-15);
        EXPECT_LE((yz.second.col(k) - std::exp(nu_tilde[static_cast<std::size_t>(k)]) * Zt.col(k)).norm(), 1e-15);
    }
    yz = map_adjoint(Yt, Zt, nu_tilde, 1.4);
    EXPECT_EQ(yz.first.col(0), Yt.col(0));
    EXPECT_LE((yz.second.col(0) - (Zt.col(0) + 0.7 * Yt.col(0))).norm(), 1e-15);
    yz = map_adjoint(PathMatrix::Zero(2, 3), PathMatrix::Zero(2, 3), nu_tilde, 1.4);
    EXPECT_EQ(yz.first.norm() + yz.second.norm(), 0.0);
}

TEST(Equivalence, WeightedAndClassicalLyapunovAgree) {
    std::mt19937_64 gen(11);
    for (int i = 0; i < 30; ++i) {
        const Eigen::Index n = 1 + i % 3, m = 1 + i % 2;
        const ProblemSpec spec = fixtures::random_strict_instance(gen, n, m);
        const Matrix Theta = fixtures::random_matrix(gen, m, n, 0.2);
        const TransformedSystem ts = to_classical(spec);
        const Matrix L = fixtures::random_spd(gen, n);
        Matrix Pw, Pc;
        try {
            Pw = solve_weighted_lyapunov(spec.A() + spec.B() * Theta, spec.C() + spec.D() * Theta, spec.E(), spec.F(), L);
        } catch (const Error&) {
            continue;
        }
        Pc = solve_generalized_lyapunov(ts.At + ts.Bt * Theta, ts.Ct + ts.Dt * Theta, L);
        EXPECT_LE((Pw - Pc).norm(), 1e-12 * Pw.norm());
    }
}
