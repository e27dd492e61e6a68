#pragma once

// Newton–Kleinman iteration for the stabilizing solution of the classical
// stochastic algebraic Riccati equation
//
//   PA + AᵀP + CᵀPC + Q − (BᵀP + DᵀPC + S)ᵀ(R + DᵀPD)⁻¹(BᵀP + DᵀPC + S) = 0.
//
// Each step solves one generalized Lyapunov equation for the closed loop of
// the current gain. Started from a stabilizing gain the iterates stay
// stabilizing and decrease monotonically to the stabilizing solution.

#include <Eigen/Cholesky>

#include <cmath>
#include <string>
#include <vector>

#include "rlq/error.hpp"
#include "rlq/linalg.hpp"
#include "rlq/lyapunov.hpp"

namespace rlq {

struct RiccatiData {
    Matrix A, B, C, D;
    Matrix Q, S, R;
};

struct NewtonKleinmanOptions {
    int max_iterations = 50;
    double step_tol = 1e-12;      // ‖P_{k+1} − P_k‖_F ≤ step_tol·‖P_k‖_F
    double residual_tol = 1e-10;  // residual ≤ residual_tol·(1 + ‖P‖_F)
    int divergence_window = 5;
};

struct NewtonKleinmanResult {
    Matrix P;
    Matrix Theta;
    int iterations = 0;
    double residual = 0.0;
    std::vector<double> step_norms;
    std::vector<double> residuals;
};

/// (R + DᵀPD)⁻¹·rhs, failing with SingularRplus when R + DᵀPD is not
/// positive definite.
inline Matrix solve_rplus(const Matrix& R, const Matrix& D, const Matrix& P, const Matrix& rhs,
                          const char* module = "synthesis", const char* op = "solve_are") {
    const Matrix Rp = symmetrized(R + D.transpose() * P * D);
    Eigen::LLT<Matrix> llt(Rp);
    if (llt.info() != Eigen::Success || !is_positive_definite(Rp)) {
        Eigen::FullPivLU<Matrix> lu(Rp);
        if (!lu.isInvertible()) {
            throw Error(ErrorCode::SingularRplus, module, op, "R + D'PD is singular");
        }
        return lu.solve(rhs);
    }
    return llt.solve(rhs);
}

/// Gain Θ = −(R + DᵀPD)⁻¹(BᵀP + DᵀPC + S).
inline Matrix riccati_gain(const RiccatiData& d, const Matrix& P) {
    return -solve_rplus(d.R, d.D, P, d.B.transpose() * P + d.D.transpose() * P * d.C + d.S);
}

inline Matrix riccati_residual(const RiccatiData& d, const Matrix& P) {
    const Matrix G = d.B.transpose() * P + d.D.transpose() * P * d.C + d.S;
    return P * d.A + d.A.transpose() * P + d.C.transpose() * P * d.C + d.Q - G.transpose() * solve_rplus(d.R, d.D, P, G);
}

/// Cost weight of the closed loop u = ΘX: Q + SᵀΘ + ΘᵀS + ΘᵀRΘ.
inline Matrix closed_loop_weight(const Matrix& Q, const Matrix& S, const Matrix& R, const Matrix& Theta) {
    return symmetrized(Q + S.transpose() * Theta + Theta.transpose() * S + Theta.transpose() * R * Theta);
}

inline Matrix closed_loop_value(const RiccatiData& d, const Matrix& Theta) {
    return solve_generalized_lyapunov(d.A + d.B * Theta, d.C + d.D * Theta, closed_loop_weight(d.Q, d.S, d.R, Theta));
}

inline NewtonKleinmanResult newton_kleinman(const RiccatiData& d, const Matrix& theta0,
                                            const NewtonKleinmanOptions& opt = {}) {
    NewtonKleinmanResult res;
    Matrix P;
    try {
        P = closed_loop_value(d, theta0);
    } catch (const Error& e) {
        throw Error(ErrorCode::NoInitialStabilizer, "synthesis", "solve_are",
                    "initial gain does not stabilize: " + std::string(to_string(e.code())));
    }

    double prev_residual = riccati_residual(d, P).norm();
    int growth = 0;
    for (int k = 1; k <= opt.max_iterations; ++k) {
        const Matrix Theta = riccati_gain(d, P);
        Matrix next;
        try {
            next = symmetrized(closed_loop_value(d, Theta));
        } catch (const Error& e) {
            throw Error(ErrorCode::IterationDiverged, "synthesis", "solve_are",
                        "iteration " + std::to_string(k) + ": " + e.what());
        }
        const double step = (next - P).norm();
        const double residual = riccati_residual(d, next).norm();
        res.step_norms.push_back(step);
        res.residuals.push_back(residual);
        res.iterations = k;
        const double scale = P.norm();
        P = std::move(next);

        if (step <= opt.step_tol * scale || residual <= opt.residual_tol * (1.0 + P.norm())) {
            res.P = P;
            res.Theta = riccati_gain(d, P);
            res.residual = residual;
            return res;
        }
        growth = residual > prev_residual ? growth + 1 : 0;
        if (growth >= opt.divergence_window) {
            throw Error(ErrorCode::IterationDiverged, "synthesis", "solve_are",
                        "residual grew for " + std::to_string(growth) + " consecutive steps");
        }
        prev_residual = residual;
    }
    throw Error(ErrorCode::IterationDiverged, "synthesis", "solve_are",
                "no convergence in " + std::to_string(opt.max_iterations) + " iterations");
}

}  // namespace rlq
