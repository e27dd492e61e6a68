#pragma once

// Weight process μ(s) = exp(−E·s − F²s/2 − F·W(s)) and the half-exponent
// ν(s,t) with e^{2ν(s,t)} = μ(s)/μ(t). All evaluations are exact
// exponentials of Brownian increments; the μ SDE is never time-stepped.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rlq/error.hpp"

namespace rlq {

struct WeightParams {
    double E = 0.0;
    double F = 0.0;
};

/// log(μ(s)/μ(t)) given the increment W(s) − W(t).
inline double log_mu_ratio(double s, double t, double w_increment, const WeightParams& p) {
    return -p.E * (s - t) - 0.5 * p.F * p.F * (s - t) - p.F * w_increment;
}

/// μ(s)/μ(t) = exp(−E(s−t) − F²(s−t)/2 − F·[W(s) − W(t)]).
inline double mu_exact(double s, double t, double w_increment, const WeightParams& p) {
    return std::exp(log_mu_ratio(s, t, w_increment, p));
}

/// 𝔼[μ(s)/μ(t)] = e^{−E(s−t)}.
inline double mu_mean(double s, double t, const WeightParams& p) { return std::exp(-p.E * (s - t)); }

/// p₂ > 1 + F²/(2E).
inline bool check_exponent_condition(double p2, const WeightParams& p) {
    if (!(p.E > 0.0)) {
        throw Error(ErrorCode::NonpositiveE, "weight", "check_exponent_condition", "E = " + std::to_string(p.E));
    }
    return p2 > 1.0 + p.F * p.F / (2.0 * p.E);
}

/// ν(s,t) = −(2E + F²)/4·(s − t) − (F/2)·[W(s) − W(t)].
inline double nu_exponent(double s, double t, double w_increment, const WeightParams& p) {
    return -(2.0 * p.E + p.F * p.F) / 4.0 * (s - t) - 0.5 * p.F * w_increment;
}

/// Per-path normal stream. Seeded from (seed, path_index) only, so paths can
/// be produced in any order or on any worker with identical results.
class PathRng {
public:
    PathRng(std::uint64_t seed, std::uint64_t path_index) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(path_index), static_cast<std::uint32_t>(path_index >> 32),
                          0x9e3779b9u};
        engine_.seed(seq);
    }

    double normal() { return dist_(engine_); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> dist_{0.0, 1.0};
};

/// Brownian increment over a step of length dt, assembled from 2^refine
/// sub-increments. A run at step dt with refine = r and a run at step dt/2
/// with refine = r − 1 consume the same normals in the same order, so they
/// see the same Brownian path (common random numbers across resolutions).
inline double brownian_increment(PathRng& rng, double dt, int refine) {
    if (refine <= 0) return std::sqrt(dt) * rng.normal();
    const int pieces = 1 << refine;
    const double sub = std::sqrt(dt / pieces);
    double w = 0.0;
    for (int i = 0; i < pieces; ++i) w += sub * rng.normal();
    return w;
}

/// Time grid with a sampled Brownian path, W[0] = 0.
struct BrownianGrid {
    std::vector<double> t;
    std::vector<double> W;

    [[nodiscard]] std::size_t size() const noexcept { return t.size(); }

    static BrownianGrid sample(std::vector<double> t_grid, std::uint64_t seed, std::uint64_t path_index,
                               int refine = 0) {
        if (t_grid.size() < 2) throw Error(ErrorCode::InvalidArgument, "weight", "BrownianGrid", "need >= 2 nodes");
        for (std::size_t k = 1; k < t_grid.size(); ++k) {
            if (!(t_grid[k] > t_grid[k - 1]))
                throw Error(ErrorCode::InvalidArgument, "weight", "BrownianGrid", "grid must be strictly increasing");
        }
        BrownianGrid g;
        g.t = std::move(t_grid);
        g.W.assign(g.t.size(), 0.0);
        PathRng rng(seed, path_index);
        for (std::size_t k = 1; k < g.t.size(); ++k)
            g.W[k] = g.W[k - 1] + brownian_increment(rng, g.t[k] - g.t[k - 1], refine);
        return g;
    }
};

inline std::vector<double> uniform_grid(double t0, double horizon, double dt) {
    const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
    std::vector<double> t(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) t[k] = t0 + static_cast<double>(k) * dt;
    return t;
}

/// Running log μ(t_k)/μ(t_0) along a grid. Log space keeps long products of
/// ratios from underflowing before they are used.
inline std::vector<double> log_mu_path(const BrownianGrid& g, const WeightParams& p) {
    std::vector<double> out(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) out[k] = log_mu_ratio(g.t[k], g.t[0], g.W[k] - g.W[0], p);
    return out;
}

}  // namespace rlq
