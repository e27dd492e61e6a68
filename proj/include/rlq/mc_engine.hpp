#pragma once

// Euler–Maruyama simulation and Monte Carlo estimation of the recursive cost
//
//   J(t, x; u) = 𝔼∫ₜ^∞ (μ(τ)/μ(t)) f(τ, X, u) dτ,
//   f = ⟨QX,X⟩ + 2⟨SX,u⟩ + ⟨Ru,u⟩ + 2⟨q,X⟩ + 2⟨r,u⟩.
//
// Each path draws its Brownian increments once from (seed, path_index); every
// coupled system on that path (original and transformed state, optimal and
// perturbed control, full and reduced state) is driven by the same vector of
// increments. Deterministic inputs are tabulated on the grid once.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rlq/error.hpp"
#include "rlq/linalg.hpp"
#include "rlq/model.hpp"
#include "rlq/parallel.hpp"
#include "rlq/stability.hpp"
#include "rlq/synthesis.hpp"
#include "rlq/transform.hpp"
#include "rlq/weight.hpp"

namespace rlq {

struct SimConfig {
    double T_max = 10.0;
    double dt = 1e-3;
    std::size_t n_paths = 1000;
    std::uint64_t seed = 0;
    bool antithetic = false;
    int brownian_refine = 0;

    void check(const char* op) const {
        if (!(dt > 0.0) || !std::isfinite(T_max) || !(T_max >= 10.0 * dt * (1.0 - 1e-12))) {
            throw Error(ErrorCode::InvalidArgument, "mc_engine", op, "need dt > 0 and T_max >= 10 dt");
        }
        if (n_paths < 2) throw Error(ErrorCode::InvalidArgument, "mc_engine", op, "need n_paths >= 2");
        if (antithetic && n_paths % 2 != 0) {
            throw Error(ErrorCode::InvalidArgument, "mc_engine", op, "antithetic sampling needs an even path count");
        }
        if (brownian_refine < 0) throw Error(ErrorCode::InvalidArgument, "mc_engine", op, "brownian_refine < 0");
    }

    [[nodiscard]] std::size_t steps() const { return static_cast<std::size_t>(std::llround(T_max / dt)); }
};

/// u = 0, u = v(s) (deterministic open loop) or u = ΘX + v(s).
class ControlLaw {
public:
    enum class Kind { Zero, OpenLoop, Feedback };
    using Schedule = std::function<Vector(double)>;

    static ControlLaw zero() { return ControlLaw(Kind::Zero, {}, {}); }
    static ControlLaw open_loop(Schedule u) { return ControlLaw(Kind::OpenLoop, {}, std::move(u)); }
    static ControlLaw feedback(Matrix Theta, Schedule v = {}) {
        return ControlLaw(Kind::Feedback, std::move(Theta), std::move(v));
    }
    static ControlLaw closed_loop(const SynthesisResult& syn) {
        if (syn.vbar.is_zero()) return feedback(syn.Theta_bar);
        Vbar vbar = syn.vbar;
        return feedback(syn.Theta_bar, [vbar](double s) { return vbar(s); });
    }

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] const Matrix& Theta() const noexcept { return Theta_; }
    [[nodiscard]] const Schedule& schedule() const noexcept { return v_; }

private:
    ControlLaw(Kind k, Matrix Theta, Schedule v) : kind_(k), Theta_(std::move(Theta)), v_(std::move(v)) {}
    Kind kind_;
    Matrix Theta_;
    Schedule v_;
};

/// Stored paths: X[p] is n × (steps+1), u[p] is m × (steps+1), W[p] has steps+1 entries.
struct PathEnsemble {
    std::vector<double> t;
    std::vector<PathMatrix> X;
    std::vector<PathMatrix> u;
    std::vector<std::vector<double>> W;
};

struct PathsSummary {
    std::size_t n_paths = 0;
    std::size_t steps = 0;
    double dt = 0.0;
    double T_max = 0.0;
    std::uint64_t seed = 0;
    bool antithetic = false;
    bool deterministic = false;
    double max_state_norm = 0.0;
};

struct SimulationReport {
    double cost_mean = 0.0;
    double cost_se = 0.0;
    double tail_bound = 0.0;
    std::optional<double> stationarity_rms;
    std::optional<double> stationarity_scale;
    double weighted_state_norm = 0.0;       // 𝔼∫ₜ^{T_max} μ|X|²
    double weighted_state_norm_half = 0.0;  // same, truncated at the half horizon
    double decay_rate = 0.0;                // δ used for the tail envelope
    PathsSummary paths;
};

namespace detail {

inline Matrix tabulate(const DeterministicSignal& sig, const std::vector<double>& t) {
    Matrix out = Matrix::Zero(sig.dim(), static_cast<Eigen::Index>(t.size()));
    if (sig.is_zero()) return out;
    Vector v;
    for (std::size_t k = 0; k < t.size(); ++k) {
        sig.eval(t[k], v);
        out.col(static_cast<Eigen::Index>(k)) = v;
    }
    return out;
}

inline bool all_zero(const Matrix& M) { return M.size() == 0 || M.cwiseAbs().maxCoeff() == 0.0; }

inline void path_increments(const SimConfig& cfg, std::size_t path, std::size_t steps, bool deterministic,
                            std::vector<double>& dW) {
    dW.assign(steps, 0.0);
    if (deterministic) return;
    const std::size_t stream = cfg.antithetic ? path / 2 : path;
    const double sign = (cfg.antithetic && path % 2 == 1) ? -1.0 : 1.0;
    PathRng rng(cfg.seed, stream);
    for (std::size_t k = 0; k < steps; ++k) dW[k] = sign * brownian_increment(rng, cfg.dt, cfg.brownian_refine);
}

/// Per-path scalars → mean and SE; antithetic pairs are averaged first.
inline MeanAndError reduce_paths(std::vector<double> values, bool antithetic) {
    if (antithetic) {
        std::vector<double> pairs(values.size() / 2);
        for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i] = 0.5 * (values[2 * i] + values[2 * i + 1]);
        return mean_and_se(pairs);
    }
    return mean_and_se(values);
}

/// Shared setup for one (spec, law, cfg) triple.
class Simulator {
public:
    Simulator(const ProblemSpec& spec, const ControlLaw& law, const SimConfig& cfg, const char* op)
        : spec_(spec), cfg_(cfg), op_(op) {
        cfg.check(op);
        steps_ = cfg.steps();
        t_ = uniform_grid(spec.t0(), static_cast<double>(steps_) * cfg.dt, cfg.dt);
        const Eigen::Index n = spec.n();
        const Eigen::Index m = spec.m();
        feedback_ = law.kind() == ControlLaw::Kind::Feedback;
        Theta_ = feedback_ ? law.Theta() : Matrix::Zero(m, n);
        if (Theta_.rows() != m || Theta_.cols() != n) {
            throw Error(ErrorCode::DimensionMismatch, "mc_engine", op, "gain must be m x n");
        }
        V_ = Matrix::Zero(m, static_cast<Eigen::Index>(t_.size()));
        if (law.kind() != ControlLaw::Kind::Zero && law.schedule()) {
            for (std::size_t k = 0; k < t_.size(); ++k) {
                Vector v = law.schedule()(t_[k]);
                if (v.size() != m) throw Error(ErrorCode::DimensionMismatch, "mc_engine", op, "control schedule must have m entries");
                V_.col(static_cast<Eigen::Index>(k)) = v;
            }
        }
        b_ = tabulate(spec.b(), t_);
        sigma_ = tabulate(spec.sigma(), t_);
        q_ = tabulate(spec.q(), t_);
        r_ = tabulate(spec.r(), t_);
        has_v_ = !all_zero(V_);
        has_b_ = !all_zero(b_);
        has_sigma_ = !all_zero(sigma_);
        has_q_ = !all_zero(q_);
        has_r_ = !all_zero(r_);
        deterministic_ = spec.F() == 0.0 && all_zero(spec.C()) && all_zero(spec.D()) && !has_sigma_;
        wp_ = {spec.E(), spec.F()};
    }

    [[nodiscard]] std::size_t steps() const noexcept { return steps_; }
    [[nodiscard]] const std::vector<double>& t() const noexcept { return t_; }
    [[nodiscard]] bool deterministic() const noexcept { return deterministic_; }
    [[nodiscard]] const SimConfig& cfg() const noexcept { return cfg_; }
    [[nodiscard]] const ProblemSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] const Matrix& Theta() const noexcept { return Theta_; }
    [[nodiscard]] const WeightParams& weight() const noexcept { return wp_; }
    [[nodiscard]] const Matrix& V() const noexcept { return V_; }
    [[nodiscard]] const Matrix& q() const noexcept { return q_; }
    [[nodiscard]] const Matrix& r() const noexcept { return r_; }
    [[nodiscard]] const Matrix& b() const noexcept { return b_; }
    [[nodiscard]] const Matrix& sigma() const noexcept { return sigma_; }

    void increments(std::size_t path, std::vector<double>& dW) const {
        path_increments(cfg_, path, steps_, deterministic_, dW);
    }

    /// f(τ, X, u) at grid node k, without the weight.
    [[nodiscard]] double running_cost(std::size_t k, const Vector& X, const Vector& u) const {
        double f = X.dot(spec_.Q() * X) + 2.0 * u.dot(spec_.S() * X) + u.dot(spec_.R() * u);
        const auto kk = static_cast<Eigen::Index>(k);
        if (has_q_) f += 2.0 * q_.col(kk).dot(X);
        if (has_r_) f += 2.0 * r_.col(kk).dot(u);
        return f;
    }

    /// Euler–Maruyama for the original state. obs(k, X, u) sees nodes 0..steps.
    /// u_override (m × (steps+1)) replaces the control law by a given path.
    template <typename Obs>
    void run(const std::vector<double>& dW, Obs&& obs, std::size_t path, const Vector* x0 = nullptr,
             bool forcing = true, const PathMatrix* u_override = nullptr) const {
        const Matrix& A = spec_.A();
        const Matrix& B = spec_.B();
        const Matrix& C = spec_.C();
        const Matrix& D = spec_.D();
        Vector X = x0 ? *x0 : spec_.x0();
        Vector u(spec_.m());
        Vector drift(spec_.n());
        Vector diff(spec_.n());
        for (std::size_t k = 0;; ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            if (u_override) {
                u = u_override->col(kk);
            } else {
                if (feedback_) u.noalias() = Theta_ * X;
                else u.setZero();
                if (has_v_) u += V_.col(kk);
            }
            obs(k, static_cast<const Vector&>(X), static_cast<const Vector&>(u));
            if (k == steps_) break;
            drift.noalias() = A * X;
            drift.noalias() += B * u;
            if (forcing && has_b_) drift += b_.col(kk);
            if (dW[k] != 0.0) {
                diff.noalias() = C * X;
                diff.noalias() += D * u;
                if (forcing && has_sigma_) diff += sigma_.col(kk);
                X.noalias() += dW[k] * diff;
            }
            X.noalias() += cfg_.dt * drift;
            guard(X, k + 1, path);
        }
    }

    /// Euler–Maruyama for X̃ = e^{ν}X simulated directly from the transformed
    /// SDE: dX̃ = (ÃX̃ + B̃ũ + b̃)ds + (C̃X̃ + D̃ũ + σ̃)dW with
    /// ũ = ΘX̃ + e^{ν}v, b̃ = e^{ν}(b − (F/2)σ), σ̃ = e^{ν}σ.
    /// obs(k, Xt, ut, nu).
    template <typename Obs>
    void run_transformed(const std::vector<double>& dW, Obs&& obs, std::size_t path) const {
        const TransformedSystem ts = to_classical(spec_);
        const double F = spec_.F();
        const double a = (2.0 * spec_.E() + F * F) / 4.0;
        Vector X = spec_.x0();
        Vector u(spec_.m());
        Vector drift(spec_.n());
        Vector diff(spec_.n());
        double w = 0.0;
        for (std::size_t k = 0;; ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            const double nu = -a * (t_[k] - t_[0]) - 0.5 * F * w;
            const double enu = std::exp(nu);
            if (feedback_) u.noalias() = Theta_ * X;
            else u.setZero();
            if (has_v_) u += enu * V_.col(kk);
            obs(k, static_cast<const Vector&>(X), static_cast<const Vector&>(u), nu);
            if (k == steps_) break;
            drift.noalias() = ts.At * X;
            drift.noalias() += ts.Bt * u;
            if (has_b_ || has_sigma_) drift += enu * (b_.col(kk) - 0.5 * F * sigma_.col(kk));
            diff.noalias() = ts.Ct * X;
            diff.noalias() += ts.Dt * u;
            if (has_sigma_) diff += enu * sigma_.col(kk);
            X.noalias() += cfg_.dt * drift + dW[k] * diff;
            w += dW[k];
            guard(X, k + 1, path);
        }
    }

    /// Runs fn(path, dW) for every path (or only path 0 when deterministic)
    /// and returns the number of paths actually simulated.
    template <typename Fn>
    std::size_t for_each_path(Fn&& fn) const {
        const std::size_t count = deterministic_ ? 1 : cfg_.n_paths;
        parallel_for(count, [&](std::size_t p) {
            std::vector<double> dW;
            increments(p, dW);
            fn(p, dW);
        });
        return count;
    }

private:
    void guard(const Vector& X, std::size_t step, std::size_t path) const {
        const double nx = X.norm();
        if (!(nx <= 1e12)) {
            throw Error(ErrorCode::NumericalBlowup, "mc_engine", op_,
                        "|X| = " + std::to_string(nx) + " at step " + std::to_string(step) + " of path " +
                            std::to_string(path));
        }
    }

    const ProblemSpec& spec_;
    SimConfig cfg_;
    const char* op_;
    std::size_t steps_ = 0;
    std::vector<double> t_;
    bool feedback_ = false;
    Matrix Theta_, V_, b_, sigma_, q_, r_;
    bool has_v_ = false, has_b_ = false, has_sigma_ = false, has_q_ = false, has_r_ = false;
    bool deterministic_ = false;
    WeightParams wp_;
};

/// Copies slot 0 into every slot (deterministic ensembles).
template <typename T>
void replicate_first(std::vector<T>& v, std::size_t stride, std::size_t simulated) {
    if (simulated != 1) return;
    const std::size_t n = v.size() / stride;
    for (std::size_t p = 1; p < n; ++p)
        std::copy_n(v.begin(), stride, v.begin() + static_cast<std::ptrdiff_t>(p * stride));
}

/// Certified decay rate of 𝔼μ|X|² for the closed loop of gain Θ, or nullopt.
inline std::optional<double> closed_loop_decay(const ProblemSpec& spec, const Matrix& Theta) {
    const StabilityVerdict v = is_stabilizer(Theta, spec);
    if (!v.stable || !v.P) return std::nullopt;
    return certified_decay_rate(*v.P, identity(spec.n()));
}

}  // namespace detail

/// Stores every path. Meant for small ensembles (plots, pathwise checks).
inline PathEnsemble simulate_state(const ProblemSpec& spec, const ControlLaw& law, const SimConfig& cfg) {
    const detail::Simulator sim(spec, law, cfg, "simulate_state");
    const auto K = static_cast<Eigen::Index>(sim.steps() + 1);
    PathEnsemble out;
    out.t = sim.t();
    out.X.assign(cfg.n_paths, PathMatrix(spec.n(), K));
    out.u.assign(cfg.n_paths, PathMatrix(spec.m(), K));
    out.W.assign(cfg.n_paths, std::vector<double>(static_cast<std::size_t>(K), 0.0));
    // Stored ensembles are always simulated path by path, even when deterministic.
    parallel_for(cfg.n_paths, [&](std::size_t p) {
        std::vector<double> dW;
        sim.increments(p, dW);
        for (std::size_t k = 0; k < dW.size(); ++k) out.W[p][k + 1] = out.W[p][k] + dW[k];
        sim.run(
            dW,
            [&](std::size_t k, const Vector& X, const Vector& u) {
                out.X[p].col(static_cast<Eigen::Index>(k)) = X;
                out.u[p].col(static_cast<Eigen::Index>(k)) = u;
            },
            p);
    });
    return out;
}

/// f(s, X, u) for a stored ensemble: result[p][k].
inline std::vector<std::vector<double>> running_cost_paths(const ProblemSpec& spec, const PathEnsemble& ens) {
    const Matrix q = detail::tabulate(spec.q(), ens.t);
    const Matrix r = detail::tabulate(spec.r(), ens.t);
    std::vector<std::vector<double>> out(ens.X.size(), std::vector<double>(ens.t.size()));
    for (std::size_t p = 0; p < ens.X.size(); ++p) {
        for (std::size_t k = 0; k < ens.t.size(); ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            const Vector X = ens.X[p].col(kk);
            const Vector u = ens.u[p].col(kk);
            out[p][k] = X.dot(spec.Q() * X) + 2.0 * u.dot(spec.S() * X) + u.dot(spec.R() * u) + 2.0 * q.col(kk).dot(X) +
                        2.0 * r.col(kk).dot(u);
        }
    }
    return out;
}

/// (μ(s)/μ(t))·f(s, X, u) pathwise: result[p][k].
inline std::vector<std::vector<double>> weighted_integrand_paths(const ProblemSpec& spec, const PathEnsemble& ens) {
    auto out = running_cost_paths(spec, ens);
    const WeightParams wp{spec.E(), spec.F()};
    for (std::size_t p = 0; p < out.size(); ++p)
        for (std::size_t k = 0; k < ens.t.size(); ++k) out[p][k] *= mu_exact(ens.t[k], ens.t[0], ens.W[p][k], wp);
    return out;
}

/// Unweighted integrand of the transformed classical problem for mapped
/// paths X̃, ũ and mapped signals q̃ = e^{ν}q, r̃ = e^{ν}r.
inline std::vector<double> transformed_integrand_path(const ProblemSpec& spec, const std::vector<double>& t,
                                                      const PathMatrix& Xt, const PathMatrix& ut,
                                                      std::span<const double> nu) {
    const Matrix q = detail::tabulate(spec.q(), t);
    const Matrix r = detail::tabulate(spec.r(), t);
    std::vector<double> out(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        const Vector X = Xt.col(kk);
        const Vector u = ut.col(kk);
        const double e = std::exp(nu[k]);
        out[k] = X.dot(spec.Q() * X) + 2.0 * u.dot(spec.S() * X) + u.dot(spec.R() * u) + 2.0 * e * q.col(kk).dot(X) +
                 2.0 * e * r.col(kk).dot(u);
    }
    return out;
}

/// ν(s, t) along a stored Brownian path.
inline std::vector<double> nu_path(const std::vector<double>& t, const std::vector<double>& W, const WeightParams& wp) {
    std::vector<double> out(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) out[k] = nu_exponent(t[k], t[0], W[k] - W[0], wp);
    return out;
}

inline SimulationReport estimate_cost(const ProblemSpec& spec, const ControlLaw& law, const SimConfig& cfg) {
    const detail::Simulator sim(spec, law, cfg, "estimate_cost");
    const std::size_t steps = sim.steps();
    const std::size_t half = steps / 2;
    const double dt = cfg.dt;
    const auto& t = sim.t();

    constexpr std::size_t kTailSamples = 16;
    const std::size_t tail_start = steps - steps / 4;
    std::vector<std::size_t> tail_nodes(kTailSamples);
    std::vector<double> tail_times(kTailSamples);
    for (std::size_t i = 0; i < kTailSamples; ++i) {
        tail_nodes[i] = tail_start + (steps - tail_start) * i / (kTailSamples - 1);
        tail_times[i] = t[tail_nodes[i]];
    }

    const std::size_t N = cfg.n_paths;
    std::vector<double> cost(N), wsn(N), wsn_half(N), max_norm(N);
    std::vector<double> tail(N * kTailSamples);

    const std::size_t simulated = sim.for_each_path([&](std::size_t p, const std::vector<double>& dW) {
        double J = 0.0, S = 0.0, S_half = 0.0, mx = 0.0, w = 0.0;
        std::size_t next_tail = 0;
        sim.run(
            dW,
            [&](std::size_t k, const Vector& X, const Vector& u) {
                const double mu = mu_exact(t[k], t[0], w, sim.weight());
                const double f = mu * sim.running_cost(k, X, u);
                const double x2 = mu * X.squaredNorm();
                const double wt = (k == 0 || k == steps) ? 0.5 * dt : dt;
                J += wt * f;
                S += wt * x2;
                if (k <= half) S_half += ((k == 0 || k == half) ? 0.5 * dt : dt) * x2;
                mx = std::max(mx, X.norm());
                while (next_tail < kTailSamples && tail_nodes[next_tail] == k) tail[p * kTailSamples + next_tail++] = std::abs(f);
                if (k < steps) w += dW[k];
            },
            p);
        cost[p] = J;
        wsn[p] = S;
        wsn_half[p] = S_half;
        max_norm[p] = mx;
    });
    detail::replicate_first(cost, 1, simulated);
    detail::replicate_first(wsn, 1, simulated);
    detail::replicate_first(wsn_half, 1, simulated);
    detail::replicate_first(max_norm, 1, simulated);
    detail::replicate_first(tail, kTailSamples, simulated);

    SimulationReport rep;
    const MeanAndError c = detail::reduce_paths(cost, cfg.antithetic);
    rep.cost_mean = c.mean;
    rep.cost_se = c.se;
    rep.weighted_state_norm = detail::reduce_paths(wsn, cfg.antithetic).mean;
    rep.weighted_state_norm_half = detail::reduce_paths(wsn_half, cfg.antithetic).mean;
    rep.paths = {N, steps, dt, static_cast<double>(steps) * dt, cfg.seed, cfg.antithetic, sim.deterministic(),
                 *std::max_element(max_norm.begin(), max_norm.end())};

    std::vector<double> profile(kTailSamples), column(N);
    for (std::size_t i = 0; i < kTailSamples; ++i) {
        for (std::size_t p = 0; p < N; ++p) column[p] = tail[p * kTailSamples + i];
        profile[i] = mean_and_se(column).mean;
    }
    const double end_scale = profile.back();
    if (end_scale == 0.0) return rep;

    const double slope = detail::log_slope(tail_times, profile);
    const auto certified = detail::closed_loop_decay(spec, sim.Theta());
    if (!(slope < 0.0)) {
        throw Error(ErrorCode::NonIntegrableTail, "mc_engine", "estimate_cost",
                    "weighted integrand log-slope " + std::to_string(slope) + " over the last quarter of the horizon");
    }
    rep.decay_rate = certified ? std::min(*certified, -slope) : -slope;
    rep.tail_bound = end_scale / rep.decay_rate;
    return rep;
}

/// Horizon at which the certified envelope e^{−δ(T−t)} drops below rel_tail.
inline double suggest_horizon(const ProblemSpec& spec, const Matrix& Theta, double rel_tail = 1e-4) {
    const auto delta = detail::closed_loop_decay(spec, Theta);
    if (!delta) {
        throw Error(ErrorCode::NotCertified, "mc_engine", "suggest_horizon", "closed loop has no Lyapunov certificate");
    }
    return std::log(1.0 / rel_tail) / *delta;
}

struct BsdeInput {
    std::vector<double> t;                  // grid, t[0] = t
    std::vector<std::vector<double>> f;     // f[p][k]
    std::vector<std::vector<double>> W;     // W[p][k]
    std::vector<double> xi;                 // terminal values per path (empty = 0)
    bool infinite_horizon = true;
};

/// Ŷ(t) = 𝔼[(μ(T)/μ(t))ξ + ∫ₜ^T (μ(τ)/μ(t)) f(τ)dτ], evaluated by the
/// backward recursion Y_k = ρ_k Y_{k+1} + (h/2)(f_k + ρ_k f_{k+1}),
/// ρ_k = μ(t_{k+1})/μ(t_k), which unrolls to the trapezoidal rule.
inline MeanAndError evaluate_bsde_representation(const BsdeInput& in, const WeightParams& wp) {
    const bool has_xi = std::any_of(in.xi.begin(), in.xi.end(), [](double v) { return v != 0.0; });
    if (in.infinite_horizon && has_xi) {
        throw Error(ErrorCode::HorizonRequired, "mc_engine", "evaluate_bsde_representation",
                    "terminal value on an infinite horizon");
    }
    if (in.f.size() != in.W.size() || (!in.xi.empty() && in.xi.size() != in.f.size()) || in.t.size() < 2) {
        throw Error(ErrorCode::DimensionMismatch, "mc_engine", "evaluate_bsde_representation", "ensemble sizes differ");
    }
    const std::size_t K = in.t.size();
    std::vector<double> Y0(in.f.size());
    for (std::size_t p = 0; p < in.f.size(); ++p) {
        if (in.f[p].size() != K || in.W[p].size() != K) {
            throw Error(ErrorCode::GridMismatch, "mc_engine", "evaluate_bsde_representation", "path length differs from grid");
        }
        double Y = in.xi.empty() ? 0.0 : in.xi[p];
        for (std::size_t k = K - 1; k-- > 0;) {
            const double rho = mu_exact(in.t[k + 1], in.t[k], in.W[p][k + 1] - in.W[p][k], wp);
            const double h = in.t[k + 1] - in.t[k];
            Y = rho * Y + 0.5 * h * (in.f[p][k] + rho * in.f[p][k + 1]);
        }
        Y0[p] = Y;
    }
    return mean_and_se(Y0);
}

/// RMS over paths and grid nodes of (B − FD)ᵀY + DᵀZ + SX + Ru + r along the
/// closed loop u = Θ̄X + v̄. X and u come from the original simulation; (Y, Z)
/// come from the transformed system simulated directly on the same increments,
///   Ỹ = PX̃ + e^{ν}η,  Z̃ = P(C̃X̃ + D̃ũ + σ̃) − (F/2)e^{ν}η,
/// mapped back with map_adjoint. The result is zero up to the discretization
/// gap between e^{−ν}X̃ and X.
inline SimulationReport stationarity_residual(const ProblemSpec& spec, const SynthesisResult& syn, const SimConfig& cfg) {
    const ControlLaw law = ControlLaw::closed_loop(syn);
    const detail::Simulator sim(spec, law, cfg, "stationarity_residual");
    const std::size_t steps = sim.steps();
    const auto K = static_cast<Eigen::Index>(steps + 1);
    const auto& t = sim.t();
    const Eigen::Index n = spec.n();
    const Eigen::Index m = spec.m();
    const double F = spec.F();
    const TransformedSystem ts = to_classical(spec);
    const Matrix BmFD_T = (spec.B() - F * spec.D()).transpose();
    const Matrix& P = syn.P;

    Matrix eta(n, K);
    for (Eigen::Index k = 0; k < K; ++k) eta.col(k) = syn.eta(t[static_cast<std::size_t>(k)]);

    const std::size_t N = cfg.n_paths;
    std::vector<double> res2(N), x2(N), u2(N), r2(N);
    const std::size_t simulated = sim.for_each_path([&](std::size_t p, const std::vector<double>& dW) {
        PathMatrix X(n, K), U(m, K), Yt(n, K), Zt(n, K);
        std::vector<double> nu(static_cast<std::size_t>(K));
        sim.run(
            dW,
            [&](std::size_t k, const Vector& x, const Vector& u) {
                X.col(static_cast<Eigen::Index>(k)) = x;
                U.col(static_cast<Eigen::Index>(k)) = u;
            },
            p);
        sim.run_transformed(
            dW,
            [&](std::size_t k, const Vector& xt, const Vector& ut, double nu_k) {
                const auto kk = static_cast<Eigen::Index>(k);
                const double e = std::exp(nu_k);
                nu[k] = nu_k;
                Yt.col(kk) = P * xt + e * eta.col(kk);
                Vector dz = ts.Ct * xt + ts.Dt * ut + e * sim.sigma().col(kk);
                Zt.col(kk) = P * dz - 0.5 * F * e * eta.col(kk);
            },
            p);
        const MappedPaths yz = map_adjoint(Yt, Zt, negate(nu), F);
        double acc = 0.0;
        for (Eigen::Index k = 0; k < K; ++k) {
            const Vector res = BmFD_T * yz.first.col(k) + spec.D().transpose() * yz.second.col(k) + spec.S() * X.col(k) +
                               spec.R() * U.col(k) + sim.r().col(k);
            acc += res.squaredNorm();
        }
        res2[p] = acc / static_cast<double>(K);
        x2[p] = X.squaredNorm() / static_cast<double>(K);
        u2[p] = U.squaredNorm() / static_cast<double>(K);
        r2[p] = sim.r().squaredNorm() / static_cast<double>(K);
    });
    for (auto* v : {&res2, &x2, &u2, &r2}) detail::replicate_first(*v, 1, simulated);

    SimulationReport rep = estimate_cost(spec, law, cfg);
    const double rms = std::sqrt(mean_and_se(res2).mean);
    rep.stationarity_rms = rms;
    rep.stationarity_scale = (1.0 + P.norm()) * (std::sqrt(mean_and_se(x2).mean) + std::sqrt(mean_and_se(u2).mean)) +
                             std::sqrt(mean_and_se(r2).mean);
    return rep;
}

/// sup over paths and nodes with s ≤ s_max of |X̃_direct − e^{ν}X|, using
/// the same increments for both simulations.
inline double transform_consistency(const ProblemSpec& spec, const ControlLaw& law, const SimConfig& cfg,
                                    double s_max = 1.0) {
    const detail::Simulator sim(spec, law, cfg, "transform_consistency");
    const auto K = static_cast<Eigen::Index>(sim.steps() + 1);
    const auto& t = sim.t();
    std::vector<double> sup(cfg.n_paths, 0.0);
    const std::size_t simulated = sim.for_each_path([&](std::size_t p, const std::vector<double>& dW) {
        PathMatrix X(spec.n(), K);
        sim.run(dW, [&](std::size_t k, const Vector& x, const Vector&) { X.col(static_cast<Eigen::Index>(k)) = x; }, p);
        double worst = 0.0;
        sim.run_transformed(
            dW,
            [&](std::size_t k, const Vector& xt, const Vector&, double nu) {
                if (t[k] - t[0] <= s_max + 1e-12)
                    worst = std::max(worst, (xt - std::exp(nu) * X.col(static_cast<Eigen::Index>(k))).norm());
            },
            p);
        sup[p] = worst;
    });
    detail::replicate_first(sup, 1, simulated);
    return *std::max_element(sup.begin(), sup.end());
}

struct PerturbationResult {
    std::vector<double> eps;
    std::vector<double> mean;  // 𝔼[J(ū + εδu) − J(ū)] per ε
    std::vector<double> se;
    std::vector<double> mean_neg;  // same for −ε
    std::vector<double> se_neg;
    double r_squared = 0.0;  // fit ΔJ = cε²
    double curvature = 0.0;  // c
};

struct ProbeReport {
    std::vector<PerturbationResult> perturbations;
    double min_r_squared = 1.0;
    double worst_margin = 0.0;  // min over all (ΔJ + 3 SE)
    bool quadratic = true;      // R² > 0.9, or the odd part is within noise
    bool passed = true;
    double baseline_cost = 0.0;
};

/// J(ū + εδu) − J(ū) for a deterministic perturbation δu, on common random
/// numbers. By linearity X^ε = X̄ + εX^δ with dX^δ = (AX^δ + Bδu)ds +
/// (CX^δ + Dδu)dW, X^δ(t) = 0, so per path the difference is exactly
/// ε·L + ε²·Q₂ for the discretized functionals L and Q₂.
inline PerturbationResult perturbation_cost_difference(const ProblemSpec& spec, const SynthesisResult& syn,
                                                       const SimConfig& cfg, const DeterministicSignal& delta_u,
                                                       const std::vector<double>& eps, double* baseline = nullptr) {
    if (delta_u.dim() != spec.m()) {
        throw Error(ErrorCode::DimensionMismatch, "mc_engine", "optimality_probe", "perturbation must have m entries");
    }
    const ControlLaw law = ControlLaw::closed_loop(syn);
    const detail::Simulator sim(spec, law, cfg, "optimality_probe");
    const std::size_t steps = sim.steps();
    const auto K = static_cast<Eigen::Index>(steps + 1);
    const auto& t = sim.t();
    const Matrix du = detail::tabulate(delta_u, t);
    // X^δ solves the homogeneous system driven by δu alone.
    const ProblemSpec pert_spec = spec.with([&](ProblemData& d) {
        d.x0 = Vector::Zero(spec.n());
        d.b.reset();
        d.sigma.reset();
        d.q = DeterministicSignal::zero(spec.n());
        d.r = DeterministicSignal::zero(spec.m());
    });
    const detail::Simulator pert(pert_spec, ControlLaw::zero(), cfg, "optimality_probe");

    const std::size_t N = cfg.n_paths;
    std::vector<double> lin(N), quad(N), base(N);
    const Vector x_zero = Vector::Zero(spec.n());
    const std::size_t simulated = sim.for_each_path([&](std::size_t p, const std::vector<double>& dW) {
        PathMatrix Xb(spec.n(), K), Ub(spec.m(), K);
        double Jb = 0.0, w = 0.0;
        std::vector<double> mu(static_cast<std::size_t>(K));
        sim.run(
            dW,
            [&](std::size_t k, const Vector& x, const Vector& u) {
                const auto kk = static_cast<Eigen::Index>(k);
                Xb.col(kk) = x;
                Ub.col(kk) = u;
                mu[k] = mu_exact(t[k], t[0], w, sim.weight());
                Jb += ((k == 0 || k == steps) ? 0.5 : 1.0) * cfg.dt * mu[k] * sim.running_cost(k, x, u);
                if (k < steps) w += dW[k];
            },
            p);
        double L = 0.0, Q2 = 0.0;
        pert.run(
            dW,
            [&](std::size_t k, const Vector& xd, const Vector&) {
                const auto kk = static_cast<Eigen::Index>(k);
                const Vector ud = du.col(kk);
                const Vector xb = Xb.col(kk);
                const Vector ub = Ub.col(kk);
                double l = 2.0 * xd.dot(spec.Q() * xb) + 2.0 * ub.dot(spec.S() * xd) + 2.0 * ud.dot(spec.S() * xb) +
                           2.0 * ud.dot(spec.R() * ub) + 2.0 * sim.q().col(kk).dot(xd) + 2.0 * sim.r().col(kk).dot(ud);
                double qd = xd.dot(spec.Q() * xd) + 2.0 * ud.dot(spec.S() * xd) + ud.dot(spec.R() * ud);
                const double wt = ((k == 0 || k == steps) ? 0.5 : 1.0) * cfg.dt * mu[k];
                L += wt * l;
                Q2 += wt * qd;
            },
            p, &x_zero, false, &du);
        lin[p] = L;
        quad[p] = Q2;
        base[p] = Jb;
    });
    detail::replicate_first(lin, 1, simulated);
    detail::replicate_first(quad, 1, simulated);
    detail::replicate_first(base, 1, simulated);
    if (baseline) *baseline = detail::reduce_paths(base, cfg.antithetic).mean;

    PerturbationResult out;
    out.eps = eps;
    std::vector<double> diff(N);
    for (double e : eps) {
        for (double sign : {1.0, -1.0}) {
            for (std::size_t p = 0; p < N; ++p) diff[p] = sign * e * lin[p] + e * e * quad[p];
            const MeanAndError ms = detail::reduce_paths(diff, cfg.antithetic);
            (sign > 0 ? out.mean : out.mean_neg).push_back(ms.mean);
            (sign > 0 ? out.se : out.se_neg).push_back(ms.se);
        }
    }
    // Least squares ΔJ ≈ cε² through the origin; R² against the centered total.
    double num = 0.0, den = 0.0, ybar = 0.0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const double x = eps[i] * eps[i];
        num += x * out.mean[i];
        den += x * x;
        ybar += out.mean[i];
    }
    ybar /= static_cast<double>(eps.size());
    out.curvature = den > 0.0 ? num / den : 0.0;
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const double fit = out.curvature * eps[i] * eps[i];
        ss_res += (out.mean[i] - fit) * (out.mean[i] - fit);
        ss_tot += (out.mean[i] - ybar) * (out.mean[i] - ybar);
    }
    out.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
    return out;
}

/// Random piecewise-constant perturbation on unit-length pieces over
/// [t, t + T_max/2], Gaussian levels under the envelope e^{−(s−t)}, zero after.
inline DeterministicSignal random_perturbation(const ProblemSpec& spec, double horizon, std::uint64_t seed,
                                               std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), 0x5eedu};
    std::mt19937_64 gen(seq);
    std::normal_distribution<double> normal;
    const auto pieces = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(horizon)));
    std::vector<double> breaks;
    std::vector<Vector> values;
    for (std::size_t i = 0; i <= pieces; ++i) {
        const double s = static_cast<double>(i);
        breaks.push_back(spec.t0() + s);
        Vector v = Vector::Zero(spec.m());
        if (i < pieces) {
            for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = normal(gen) * std::exp(-s);
        }
        values.push_back(v);
    }
    return DeterministicSignal::piecewise_constant(std::move(breaks), std::move(values));
}

inline ProbeReport optimality_probe(const ProblemSpec& spec, const SynthesisResult& syn, const SimConfig& cfg,
                                    std::size_t n_perturbations, std::uint64_t seed,
                                    const std::vector<double>& eps = {0.05, 0.1, 0.2}, bool throw_on_violation = true) {
    ProbeReport rep;
    for (std::size_t j = 0; j < n_perturbations; ++j) {
        const DeterministicSignal du = random_perturbation(spec, 0.5 * cfg.T_max, seed, j);
        PerturbationResult r = perturbation_cost_difference(spec, syn, cfg, du, eps, j == 0 ? &rep.baseline_cost : nullptr);
        const double slack = 1e-12 * (1.0 + std::abs(rep.baseline_cost));
        for (std::size_t i = 0; i < eps.size(); ++i) {
            const double margin = std::min(r.mean[i] + 3.0 * r.se[i], r.mean_neg[i] + 3.0 * r.se_neg[i]);
            if (rep.perturbations.empty() && i == 0) rep.worst_margin = margin;
            rep.worst_margin = std::min(rep.worst_margin, margin);
            if (margin < -slack) rep.passed = false;
        }
        rep.min_r_squared = std::min(rep.min_r_squared, r.r_squared);
        // A poor fit only counts when the linear term is resolved by the MC.
        bool odd_resolved = false;
        for (std::size_t i = 0; i < eps.size(); ++i) {
            const double odd = 0.5 * std::abs(r.mean[i] - r.mean_neg[i]);
            if (odd > 1.5 * (r.se[i] + r.se_neg[i]) + slack) odd_resolved = true;
        }
        if (r.r_squared <= 0.9 && odd_resolved) {
            rep.quadratic = false;
            rep.passed = false;
        }
        rep.perturbations.push_back(std::move(r));
    }
    if (throw_on_violation && rep.worst_margin < -1e-12 * (1.0 + std::abs(rep.baseline_cost))) {
        throw Error(ErrorCode::OptimalityViolated, "mc_engine", "optimality_probe",
                    "cost decreased by more than 3 SE under a perturbation (margin " + std::to_string(rep.worst_margin) +
                        ")");
    }
    return rep;
}

struct ReductionResult {
    MeanAndError phi;
    double superposition_error = 0.0;  // max over paths and nodes of |X − X₀ − X̂| / (1 + |X|)
    std::vector<double> t;
    std::vector<PathMatrix> X_hat;  // stored paths
    std::vector<PathMatrix> q_hat;  // q + QX̂
    std::vector<PathMatrix> r_hat;  // r + SX̂
};

/// Splits X(·; t, x, u) = X₀(·; t, x, u) + X̂ where X̂ = X(·; t, 0, 0) carries
/// the b, σ forcing, estimates φ(t) = 𝔼∫(μ(τ)/μ(t))(⟨QX̂,X̂⟩ + 2⟨q,X̂⟩)dτ and
/// returns q̂ = q + QX̂, r̂ = r + SX̂ for the first `stored` paths.
inline ReductionResult reduce_nonhomogeneous(const ProblemSpec& spec, const SimConfig& cfg,
                                             const ControlLaw& law = ControlLaw::zero(), std::size_t stored = 8) {
    const detail::Simulator sim(spec, law, cfg, "reduce_nonhomogeneous");
    const std::size_t steps = sim.steps();
    const auto K = static_cast<Eigen::Index>(steps + 1);
    const auto& t = sim.t();
    const Eigen::Index n = spec.n();
    const Vector x_zero = Vector::Zero(n);
    const std::size_t N = cfg.n_paths;
    stored = std::min(stored, N);

    ReductionResult out;
    out.t = t;
    out.X_hat.assign(stored, PathMatrix(n, K));
    out.q_hat.assign(stored, PathMatrix(n, K));
    out.r_hat.assign(stored, PathMatrix(spec.m(), K));
    std::vector<double> phi(N), sup(N);
    const PathMatrix u_zero = PathMatrix::Zero(spec.m(), K);

    // X̂ is deterministic only when the full system is; stored paths are
    // always simulated individually.
    const std::size_t count = sim.deterministic() ? std::max<std::size_t>(1, stored) : N;
    parallel_for(count, [&](std::size_t p) {
        std::vector<double> dW;
        sim.increments(p, dW);
        PathMatrix X(n, K), U(spec.m(), K), Xh(n, K);
        sim.run(
            dW,
            [&](std::size_t k, const Vector& x, const Vector& u) {
                X.col(static_cast<Eigen::Index>(k)) = x;
                U.col(static_cast<Eigen::Index>(k)) = u;
            },
            p);
        double acc = 0.0, w = 0.0;
        sim.run(
            dW,
            [&](std::size_t k, const Vector& xh, const Vector&) {
                const auto kk = static_cast<Eigen::Index>(k);
                Xh.col(kk) = xh;
                const double mu = mu_exact(t[k], t[0], w, sim.weight());
                acc += ((k == 0 || k == steps) ? 0.5 : 1.0) * cfg.dt * mu *
                       (xh.dot(spec.Q() * xh) + 2.0 * sim.q().col(kk).dot(xh));
                if (k < steps) w += dW[k];
            },
            p, &x_zero, true, &u_zero);
        double worst = 0.0;
        const Vector x0 = spec.x0();
        sim.run(
            dW,
            [&](std::size_t k, const Vector& x0k, const Vector&) {
                const auto kk = static_cast<Eigen::Index>(k);
                const double e = (X.col(kk) - x0k - Xh.col(kk)).norm() / (1.0 + X.col(kk).norm());
                worst = std::max(worst, e);
            },
            p, &x0, false, &U);
        phi[p] = acc;
        sup[p] = worst;
        if (p < stored) {
            out.X_hat[p] = Xh;
            out.q_hat[p] = sim.q() + spec.Q() * Xh;
            out.r_hat[p] = sim.r() + spec.S() * Xh;
        }
    });
    if (count < N) {
        for (std::size_t p = count; p < N; ++p) {
            phi[p] = phi[0];
            sup[p] = sup[0];
        }
    }
    out.phi = detail::reduce_paths(phi, cfg.antithetic);
    out.superposition_error = *std::max_element(sup.begin(), sup.end());
    return out;
}

}  // namespace rlq
