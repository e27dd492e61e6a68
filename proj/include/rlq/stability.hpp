#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rlq/error.hpp"
#include "rlq/linalg.hpp"
#include "rlq/lyapunov.hpp"
#include "rlq/model.hpp"
#include "rlq/parallel.hpp"
#include "rlq/riccati.hpp"
#include "rlq/transform.hpp"
#include "rlq/weight.hpp"

namespace rlq {

struct LyapunovProblem {
    Matrix A, C;
    double E = 0.0;
    double F = 0.0;
    Matrix Lambda;
};

inline double lyapunov_tolerance(const Matrix& Lambda, const Matrix& P) {
    return 1e-10 * (Lambda.norm() + P.norm());
}

/// Unique symmetric P with −EP − F(PC + CᵀP) + PA + AᵀP + CᵀPC + Λ = 0.
/// Requires Λ ≻ 0.
inline Matrix solve_lyapunov(const LyapunovProblem& prob) {
    const Eigen::Index n = prob.A.rows();
    if (prob.Lambda.rows() != n || prob.Lambda.cols() != n) {
        throw Error(ErrorCode::DimensionMismatch, "stability", "solve_lyapunov", "Lambda must be n x n");
    }
    if (asymmetry(prob.Lambda) > 1e-12) {
        throw Error(ErrorCode::NotSymmetric, "stability", "solve_lyapunov", "Lambda");
    }
    if (!is_positive_definite(prob.Lambda)) {
        throw Error(ErrorCode::NotPositiveDefinite, "stability", "solve_lyapunov",
                    "Lambda, smallest eigenvalue " + std::to_string(min_eigenvalue(prob.Lambda)));
    }
    return solve_weighted_lyapunov(prob.A, prob.C, prob.E, prob.F, prob.Lambda);
}

struct StabilityVerdict {
    bool stable = false;
    std::optional<Matrix> P;
    double residual = INFINITY;  // ‖weighted Lyapunov residual‖_F with Λ = I
    double min_eig_P = -INFINITY;
    bool sufficient_holds = false;  // −E − F(C + Cᵀ) + A + Aᵀ + CᵀC ≺ 0
    std::string reason;
};

/// Weighted L²-stability of [A, C]: the Lyapunov equation with Λ = I has a
/// positive definite solution. The sufficient matrix inequality is reported
/// alongside but does not decide the verdict.
inline StabilityVerdict is_weighted_stable(const Matrix& A, const Matrix& C, double E, double F) {
    const Eigen::Index n = A.rows();
    if (A.cols() != n || C.rows() != n || C.cols() != n) {
        throw Error(ErrorCode::DimensionMismatch, "stability", "is_weighted_stable", "A, C must be square, same size");
    }
    StabilityVerdict v;
    const Matrix I = identity(n);
    const Matrix sufficient = -E * I - F * (C + C.transpose()) + A + A.transpose() + C.transpose() * C;
    v.sufficient_holds = max_eigenvalue(sufficient) < 0.0;
    try {
        Matrix P = solve_weighted_lyapunov(A, C, E, F, I);
        v.residual = weighted_lyapunov_residual(A, C, E, F, I, P).norm();
        v.min_eig_P = min_eigenvalue(P);
        const bool pd = is_positive_definite(P);
        const bool small = v.residual <= lyapunov_tolerance(I, P);
        v.stable = pd && small;
        if (!pd) v.reason = "Lyapunov solution is not positive definite";
        else if (!small) v.reason = "Lyapunov residual above tolerance";
        v.P = std::move(P);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::SingularOperator) throw;
        v.stable = false;
        v.reason = std::string("SingularOperator: ") + e.detail();
    }
    return v;
}

/// Θ is a weighted stabilizer iff [A + BΘ, C + DΘ] is weighted L²-stable.
inline StabilityVerdict is_stabilizer(const Matrix& Theta, const ProblemSpec& spec) {
    if (Theta.rows() != spec.m() || Theta.cols() != spec.n()) {
        throw Error(ErrorCode::DimensionMismatch, "stability", "is_stabilizer", "Theta must be m x n");
    }
    return is_weighted_stable(spec.A() + spec.B() * Theta, spec.C() + spec.D() * Theta, spec.E(), spec.F());
}

/// Decay rate certified by a Lyapunov pair (P, Λ): along the uncontrolled
/// flow, 𝔼[μ XᵀPX] decays at least like e^{−δs} with δ = λmin(Λ)/λmax(P).
inline double certified_decay_rate(const Matrix& P, const Matrix& Lambda) {
    const double pmax = max_eigenvalue(P);
    if (!(pmax > 0.0)) return INFINITY;
    return min_eigenvalue(Lambda) / pmax;
}

struct OracleOptions {
    std::size_t n_paths = 10000;
    std::optional<double> T_max;  // default: e^{−δ·T_max} < 1e-6 with the certified δ
    double dt = 1e-3;
    std::uint64_t seed = 0;
    int brownian_refine = 0;
};

struct OracleResult {
    Matrix P;
    Matrix se;
    double T_max = 0.0;
    double dt = 0.0;
    std::size_t n_paths = 0;
    double tail_estimate = 0.0;  // |integrand at T_max| / fitted decay rate
};

namespace detail {
inline double default_oracle_horizon(const LyapunovProblem& prob) {
    const Matrix I = identity(prob.A.rows());
    const Matrix P = solve_weighted_lyapunov(prob.A, prob.C, prob.E, prob.F, I);
    const double delta = certified_decay_rate(P, I);
    if (!(delta > 0.0) || !std::isfinite(delta)) {
        throw Error(ErrorCode::DivergenceDetected, "stability", "lyapunov_mc_oracle",
                    "no certified decay rate; system is not weighted-stable");
    }
    return std::log(1e6) / delta;
}

/// Least-squares slope of log(values) against times; values must be positive.
inline double log_slope(std::span<const double> times, std::span<const double> values) {
    double st = 0, sy = 0, stt = 0, sty = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!(values[i] > 0.0)) continue;
        const double y = std::log(values[i]);
        st += times[i];
        sy += y;
        stt += times[i] * times[i];
        sty += times[i] * y;
        ++count;
    }
    if (count < 2) return 0.0;
    const double c = static_cast<double>(count);
    const double denom = c * stt - st * st;
    return denom == 0.0 ? 0.0 : (c * sty - st * sy) / denom;
}
}  // namespace detail

/// Monte Carlo estimate of P = 𝔼∫₀^∞ μ(s)Ψ(s)ᵀΛΨ(s) ds, where
/// dΨ = AΨ ds + CΨ dW, Ψ(0) = I. Euler–Maruyama for Ψ, exact μ, trapezoidal
/// accumulation truncated at T_max. Λ = 0 is allowed here.
inline OracleResult lyapunov_mc_oracle(const LyapunovProblem& prob, const OracleOptions& opt = {}) {
    const Eigen::Index n = prob.A.rows();
    if (prob.C.rows() != n || prob.Lambda.rows() != n) {
        throw Error(ErrorCode::DimensionMismatch, "stability", "lyapunov_mc_oracle", "A, C, Lambda must be n x n");
    }
    if (opt.n_paths < 2 || !(opt.dt > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "stability", "lyapunov_mc_oracle", "need n_paths >= 2 and dt > 0");
    }
    OracleResult out;
    out.dt = opt.dt;
    out.n_paths = opt.n_paths;
    out.T_max = opt.T_max ? *opt.T_max : detail::default_oracle_horizon(prob);
    const auto steps = static_cast<std::size_t>(std::llround(out.T_max / opt.dt));
    if (steps < 10) throw Error(ErrorCode::InvalidArgument, "stability", "lyapunov_mc_oracle", "T_max < 10 dt");

    const WeightParams wp{prob.E, prob.F};
    const bool noise_free = prob.F == 0.0 && prob.C.cwiseAbs().maxCoeff() == 0.0;
    // Tail profile sampled at a fixed set of nodes in the last quarter, kept
    // per path so the reduction order is independent of the worker count.
    constexpr std::size_t kTailSamples = 16;
    const std::size_t tail_start = steps - steps / 4;
    std::vector<std::size_t> tail_nodes(kTailSamples);
    std::vector<double> tail_times(kTailSamples);
    for (std::size_t i = 0; i < kTailSamples; ++i) {
        tail_nodes[i] = tail_start + (steps - tail_start) * i / (kTailSamples - 1);
        tail_times[i] = static_cast<double>(tail_nodes[i]) * opt.dt;
    }

    const std::size_t nn = static_cast<std::size_t>(n * n);
    std::vector<double> integrals(opt.n_paths * nn, 0.0);
    std::vector<double> tail_profiles(opt.n_paths * kTailSamples, 0.0);

    auto run_path = [&](std::size_t path) {
        PathRng rng(opt.seed, path);
        Matrix psi = identity(n);
        Matrix next(n, n);
        Matrix integrand(n, n);
        Matrix acc = Matrix::Zero(n, n);
        std::size_t next_tail = 0;
        double w = 0.0;
        for (std::size_t k = 0; k <= steps; ++k) {
            const double s = static_cast<double>(k) * opt.dt;
            const double mu = std::exp(log_mu_ratio(s, 0.0, w, wp));
            integrand.noalias() = psi.transpose() * prob.Lambda * psi;
            integrand *= mu;
            const double norm = integrand.norm();
            if (!(norm < 1e12)) {
                throw Error(ErrorCode::DivergenceDetected, "stability", "lyapunov_mc_oracle",
                            "integrand norm exceeded 1e12 at step " + std::to_string(k) + " of path " +
                                std::to_string(path));
            }
            const double weight = (k == 0 || k == steps) ? 0.5 * opt.dt : opt.dt;
            acc += weight * integrand;
            while (next_tail < kTailSamples && tail_nodes[next_tail] == k) tail_profiles[path * kTailSamples + next_tail++] = norm;
            if (k == steps) break;
            const double dw = noise_free ? 0.0 : brownian_increment(rng, opt.dt, opt.brownian_refine);
            next.noalias() = prob.A * psi;
            next *= opt.dt;
            if (dw != 0.0) next.noalias() += dw * (prob.C * psi);
            psi += next;
            w += dw;
        }
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) integrals[path * nn + static_cast<std::size_t>(i * n + j)] = acc(i, j);
    };

    if (noise_free) {
        run_path(0);
        for (std::size_t p = 1; p < opt.n_paths; ++p)
            std::copy_n(integrals.begin(), nn, integrals.begin() + static_cast<std::ptrdiff_t>(p * nn));
        for (std::size_t p = 1; p < opt.n_paths; ++p)
            std::copy_n(tail_profiles.begin(), kTailSamples, tail_profiles.begin() + static_cast<std::ptrdiff_t>(p * kTailSamples));
    } else {
        parallel_for(opt.n_paths, run_path);
    }

    out.P = Matrix(n, n);
    out.se = Matrix(n, n);
    std::vector<double> column(opt.n_paths);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            for (std::size_t p = 0; p < opt.n_paths; ++p) column[p] = integrals[p * nn + static_cast<std::size_t>(i * n + j)];
            const auto ms = mean_and_se(column);
            out.P(i, j) = ms.mean;
            out.se(i, j) = ms.se;
        }
    }
    std::vector<double> profile(kTailSamples);
    for (std::size_t i = 0; i < kTailSamples; ++i) {
        for (std::size_t p = 0; p < opt.n_paths; ++p) column[p] = tail_profiles[p * kTailSamples + i];
        profile[i] = mean_and_se(column).mean;
    }
    const double slope = detail::log_slope(tail_times, profile);
    const double final_norm = profile.back();
    out.tail_estimate = final_norm == 0.0 ? 0.0 : (slope < 0.0 ? final_norm / -slope : INFINITY);
    return out;
}

/// Searches for a weighted stabilizer Θ (m × n).
///
/// 1. Θ = 0.
/// 2. Continuation in transformed coordinates: shift Ã by −αI with α large
///    enough that Θ = 0 stabilizes, solve the Riccati equation with
///    Q = I, S = 0, R = I by Newton–Kleinman, accept the gain once it
///    certifies on the unshifted system, otherwise lower α and repeat.
/// 3. Randomized search over scaled Gaussian gains.
///
/// Throws NotFound when nothing certifies within max_iters attempts per stage.
inline Matrix find_stabilizer(const ProblemSpec& spec, int max_iters = 200, std::uint64_t seed = 0) {
    const Eigen::Index n = spec.n();
    const Eigen::Index m = spec.m();
    const Matrix zero = Matrix::Zero(m, n);
    if (is_stabilizer(zero, spec).stable) return zero;

    const TransformedSystem ts = to_classical(spec);
    auto certifies_shifted = [&](const Matrix& Theta, double alpha) {
        return is_weighted_stable(ts.At - alpha * identity(n) + ts.Bt * Theta, ts.Ct + ts.Dt * Theta, 0.0, 0.0).stable;
    };

    const bool has_input = ts.Bt.cwiseAbs().maxCoeff() > 0.0 || ts.Dt.cwiseAbs().maxCoeff() > 0.0;
    if (has_input) {
        const double ct = spectral_norm(ts.Ct);
        double alpha = std::max(0.0, max_eigenvalue(symmetrized(ts.At)) + 0.5 * ct * ct + 1.0);
        Matrix Theta = zero;
        for (int iter = 0; iter < max_iters && alpha > 0.0; ++iter) {
            RiccatiData d{ts.At - alpha * identity(n), ts.Bt, ts.Ct, ts.Dt, identity(n), Matrix::Zero(m, n), identity(m)};
            try {
                Theta = newton_kleinman(d, Theta).Theta;
            } catch (const Error&) {
                break;
            }
            if (is_stabilizer(Theta, spec).stable) return Theta;
            // Lower the shift as far as the current gain still certifies.
            double next = 0.0;
            bool moved = false;
            for (int halvings = 0; halvings < 30; ++halvings) {
                if (certifies_shifted(Theta, next)) {
                    moved = true;
                    break;
                }
                next = 0.5 * (next + alpha);
            }
            if (!moved || next >= alpha * (1.0 - 1e-9)) break;
            if (next == 0.0 && is_stabilizer(Theta, spec).stable) return Theta;
            alpha = next;
        }
    }

    std::mt19937_64 engine(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double base = 1.0 + spectral_norm(spec.A()) + spectral_norm(spec.C()) + std::abs(spec.E()) + std::abs(spec.F());
    for (int iter = 0; iter < max_iters; ++iter) {
        const double scale = base * std::pow(10.0, -2.0 + 4.0 * (static_cast<double>(iter % 20) / 19.0));
        Matrix Theta(m, n);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < n; ++j) Theta(i, j) = scale * normal(engine);
        if (is_stabilizer(Theta, spec).stable) return Theta;
    }
    throw Error(ErrorCode::NotFound, "stability", "find_stabilizer", "no weighted stabilizer found");
}

}  // namespace rlq
