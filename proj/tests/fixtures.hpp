#pragma once

#include <random>

#include "rlq/rlq.hpp"

namespace fixtures {

using rlq::Matrix;
using rlq::Vector;

inline Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }
inline Vector vec1(double v) { return Vector::Constant(1, v); }

/// A=0, B=1, E=2, Q=R=1, x0=1: P = √2 − 1 for F = 0 and for F = 2.
inline rlq::ProblemSpec value_instance(double F = 0.0, double x0 = 1.0) {
    rlq::ProblemData d;
    d.A = scalar(0.0);
    d.B = scalar(1.0);
    d.C = scalar(0.0);
    d.D = scalar(0.0);
    d.E = 2.0;
    d.F = F;
    d.Q = scalar(1.0);
    d.S = scalar(0.0);
    d.R = scalar(1.0);
    d.x0 = vec1(x0);
    return rlq::ProblemSpec(std::move(d));
}

/// Scalar instance with every matrix given explicitly.
inline rlq::ProblemSpec scalar_instance(double A, double B, double C, double D, double E, double F, double Q,
                                        double R, double x0 = 1.0, double S = 0.0) {
    rlq::ProblemData d;
    d.A = scalar(A);
    d.B = scalar(B);
    d.C = scalar(C);
    d.D = scalar(D);
    d.E = E;
    d.F = F;
    d.Q = scalar(Q);
    d.S = scalar(S);
    d.R = scalar(R);
    d.x0 = vec1(x0);
    return rlq::ProblemSpec(std::move(d));
}

inline Matrix random_matrix(std::mt19937_64& gen, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    Matrix M(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = normal(gen);
    return M;
}

inline Matrix random_spd(std::mt19937_64& gen, Eigen::Index n, double floor = 0.5) {
    const Matrix G = random_matrix(gen, n, n);
    return G * G.transpose() + floor * rlq::identity(n);
}

/// Random problem satisfying the strict standing hypotheses with the zero
/// gain weighted-stabilizing (E large relative to A and C).
inline rlq::ProblemSpec random_strict_instance(std::mt19937_64& gen, Eigen::Index n, Eigen::Index m) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    rlq::ProblemData d;
    d.A = random_matrix(gen, n, n, 0.5);
    d.B = random_matrix(gen, n, m);
    d.C = random_matrix(gen, n, n, 0.3);
    d.D = random_matrix(gen, n, m, 0.3);
    d.F = unif(gen);
    d.Q = random_spd(gen, n, 1.0);
    d.R = random_spd(gen, m, 1.0);
    d.S = Matrix::Zero(m, n);
    const Matrix sym = d.A + d.A.transpose() + d.C.transpose() * d.C + d.F * rlq::spectral_norm(d.C + d.C.transpose()) * rlq::identity(n);
    d.E = std::max(0.5, rlq::max_eigenvalue(rlq::symmetrized(sym)) + 0.5 + unif(gen));
    d.x0 = random_matrix(gen, n, 1);
    return rlq::ProblemSpec(std::move(d));
}

}  // namespace fixtures
