#pragma once

// Exact correspondence between the weighted problem [A, C; B, D] with
// constants (E, F) and an unweighted classical problem [Ã, C̃; B̃, D̃]:
//
//   Ã = A − (F/2)C − ((4E + F²)/8)I     B̃ = B − (F/2)D
//   C̃ = C − (F/2)I                      D̃ = D
//
// States and controls map by X̃ = e^{ν}X, ũ = e^{ν}u; the adjoint pair maps
// back by Y = e^{ν̃}Ỹ, Z = e^{ν̃}(Z̃ + (F/2)Ỹ) with ν̃ = −ν. Cost matrices are
// unchanged.

#include <cmath>
#include <span>
#include <vector>

#include "rlq/error.hpp"
#include "rlq/linalg.hpp"
#include "rlq/model.hpp"

namespace rlq {

struct TransformedSystem {
    Matrix At, Bt, Ct, Dt;
};

struct SystemMatrices {
    Matrix A, B, C, D;
};

inline TransformedSystem to_classical(const Matrix& A, const Matrix& B, const Matrix& C, const Matrix& D, double E,
                                      double F) {
    const Eigen::Index n = A.rows();
    TransformedSystem ts;
    ts.At = A - 0.5 * F * C - ((4.0 * E + F * F) / 8.0) * identity(n);
    ts.Bt = B - 0.5 * F * D;
    ts.Ct = C - 0.5 * F * identity(n);
    ts.Dt = D;
    return ts;
}

inline TransformedSystem to_classical(const ProblemSpec& spec) {
    return to_classical(spec.A(), spec.B(), spec.C(), spec.D(), spec.E(), spec.F());
}

inline SystemMatrices from_classical(const TransformedSystem& ts, double E, double F) {
    const Eigen::Index n = ts.At.rows();
    SystemMatrices s;
    s.C = ts.Ct + 0.5 * F * identity(n);
    s.D = ts.Dt;
    s.B = ts.Bt + 0.5 * F * ts.Dt;
    s.A = ts.At + 0.5 * F * s.C + ((4.0 * E + F * F) / 8.0) * identity(n);
    return s;
}

/// A path of vectors on a time grid: column k is the value at grid node k.
using PathMatrix = Matrix;

struct MappedPaths {
    PathMatrix first;
    PathMatrix second;
};

namespace detail {
inline void require_grid(const PathMatrix& a, std::span<const double> nu, const char* op) {
    if (a.cols() != static_cast<Eigen::Index>(nu.size())) {
        throw Error(ErrorCode::GridMismatch, "transform", op,
                    "path has " + std::to_string(a.cols()) + " nodes, exponent has " + std::to_string(nu.size()));
    }
}
}  // namespace detail

/// X̃ = e^{ν}X, ũ = e^{ν}u, column by column.
inline MappedPaths map_state_control_path(const PathMatrix& X, const PathMatrix& u, std::span<const double> nu) {
    detail::require_grid(X, nu, "map_state_control_path");
    detail::require_grid(u, nu, "map_state_control_path");
    MappedPaths out{X, u};
    for (Eigen::Index k = 0; k < X.cols(); ++k) {
        const double f = std::exp(nu[static_cast<std::size_t>(k)]);
        out.first.col(k) *= f;
        out.second.col(k) *= f;
    }
    return out;
}

/// Inverse of map_state_control_path: X = e^{−ν}X̃, u = e^{−ν}ũ.
inline MappedPaths unmap_state_control_path(const PathMatrix& Xt, const PathMatrix& ut, std::span<const double> nu) {
    detail::require_grid(Xt, nu, "unmap_state_control_path");
    detail::require_grid(ut, nu, "unmap_state_control_path");
    MappedPaths out{Xt, ut};
    for (Eigen::Index k = 0; k < Xt.cols(); ++k) {
        const double f = std::exp(-nu[static_cast<std::size_t>(k)]);
        out.first.col(k) *= f;
        out.second.col(k) *= f;
    }
    return out;
}

/// (Ỹ, Z̃) ↦ (Y, Z) = (e^{ν̃}Ỹ, e^{ν̃}(Z̃ + (F/2)Ỹ)). Takes ν̃ = −ν directly.
inline MappedPaths map_adjoint(const PathMatrix& Yt, const PathMatrix& Zt, std::span<const double> nu_tilde, double F) {
    detail::require_grid(Yt, nu_tilde, "map_adjoint");
    detail::require_grid(Zt, nu_tilde, "map_adjoint");
    MappedPaths out{Yt, Zt};
    for (Eigen::Index k = 0; k < Yt.cols(); ++k) {
        const double f = std::exp(nu_tilde[static_cast<std::size_t>(k)]);
        out.first.col(k) = f * Yt.col(k);
        out.second.col(k) = f * (Zt.col(k) + 0.5 * F * Yt.col(k));
    }
    return out;
}

inline std::vector<double> negate(std::span<const double> v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = -v[i];
    return out;
}

}  // namespace rlq
