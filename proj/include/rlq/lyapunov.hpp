#pragma once

// Dense solver for the generalized (stochastic) Lyapunov equation
//
//     P·A + Aᵀ·P + Cᵀ·P·C + Λ = 0,
//
// and its weighted form
//
//     −E·P − F·(P·C + Cᵀ·P) + P·A + Aᵀ·P + Cᵀ·P·C + Λ = 0,
//
// which is reduced to the first one through
//     Ã = A − (F/2)·C − ((4E + F²)/8)·I,   C̃ = C − (F/2)·I.
//
// The unknown is the upper triangle of the symmetric P, so the linear system
// has n(n+1)/2 unknowns.

#include <Eigen/LU>

#include <cmath>
#include <string>

#include "rlq/error.hpp"
#include "rlq/linalg.hpp"

namespace rlq {

inline constexpr Eigen::Index kMaxLyapunovDim = 64;

namespace detail {

inline Eigen::Index vech_size(Eigen::Index n) { return n * (n + 1) / 2; }

inline Vector vech(const Matrix& sym) {
    const Eigen::Index n = sym.rows();
    Vector v(vech_size(n));
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i <= j; ++i) v(k++) = sym(i, j);
    return v;
}

inline Matrix unvech(const Vector& v, Eigen::Index n) {
    Matrix m(n, n);
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i <= j; ++i) {
            m(i, j) = v(k);
            m(j, i) = v(k);
            ++k;
        }
    return m;
}

}  // namespace detail

/// L(P) = P·A + Aᵀ·P + Cᵀ·P·C.
inline Matrix lyapunov_operator(const Matrix& A, const Matrix& C, const Matrix& P) {
    return P * A + A.transpose() * P + C.transpose() * P * C;
}

/// Residual of the weighted equation, evaluated term by term in the
/// original coordinates (no use of the shifted matrices).
inline Matrix weighted_lyapunov_residual(const Matrix& A, const Matrix& C, double E, double F,
                                         const Matrix& Lambda, const Matrix& P) {
    return -E * P - F * (P * C + C.transpose() * P) + P * A + A.transpose() * P + C.transpose() * P * C +
           Lambda;
}

/// Shifted pair (Ã, C̃) absorbing the weight into a classical equation.
inline std::pair<Matrix, Matrix> weighted_to_classical(const Matrix& A, const Matrix& C, double E, double F) {
    const Eigen::Index n = A.rows();
    Matrix At = A - 0.5 * F * C - ((4.0 * E + F * F) / 8.0) * identity(n);
    Matrix Ct = C - 0.5 * F * identity(n);
    return {std::move(At), std::move(Ct)};
}

/// Solves P·A + Aᵀ·P + Cᵀ·P·C + Λ = 0 for symmetric P. Λ only has to be
/// symmetric here; definiteness is the caller's business.
///
/// Throws SingularOperator when the operator is (numerically) singular, which
/// is what happens on the boundary of mean-square stability.
inline Matrix solve_generalized_lyapunov(const Matrix& A, const Matrix& C, const Matrix& Lambda) {
    const Eigen::Index n = A.rows();
    if (A.cols() != n || C.rows() != n || C.cols() != n || Lambda.rows() != n || Lambda.cols() != n) {
        throw Error(ErrorCode::DimensionMismatch, "stability", "solve_lyapunov", "A, C, Lambda must be n x n");
    }
    if (n > kMaxLyapunovDim) {
        throw Error(ErrorCode::TooLarge, "stability", "solve_lyapunov",
                    "n = " + std::to_string(n) + " exceeds " + std::to_string(kMaxLyapunovDim));
    }
    if (n == 0) return Matrix(0, 0);

    const Eigen::Index N = detail::vech_size(n);
    Matrix op(N, N);
    Matrix basis = Matrix::Zero(n, n);
    Eigen::Index col = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i <= j; ++i) {
            basis(i, j) = 1.0;
            basis(j, i) = 1.0;
            op.col(col++) = detail::vech(lyapunov_operator(A, C, basis));
            basis(i, j) = 0.0;
            basis(j, i) = 0.0;
        }
    }

    const Vector rhs = -detail::vech(symmetrized(Lambda));
    Eigen::PartialPivLU<Matrix> lu(op);
    const double rcond = lu.rcond();
    if (!(rcond > 1e-14)) {
        throw Error(ErrorCode::SingularOperator, "stability", "solve_lyapunov",
                    "reciprocal condition estimate " + std::to_string(rcond));
    }
    Vector p = lu.solve(rhs);
    // one step of iterative refinement
    p += lu.solve(rhs - op * p);
    if (!p.allFinite()) {
        throw Error(ErrorCode::SingularOperator, "stability", "solve_lyapunov", "non-finite solution");
    }
    return detail::unvech(p, n);
}

/// Weighted form: −E·P − F(PC + CᵀP) + PA + AᵀP + CᵀPC + Λ = 0.
inline Matrix solve_weighted_lyapunov(const Matrix& A, const Matrix& C, double E, double F, const Matrix& Lambda) {
    auto [At, Ct] = weighted_to_classical(A, C, E, F);
    return solve_generalized_lyapunov(At, Ct, Lambda);
}

}  // namespace rlq
