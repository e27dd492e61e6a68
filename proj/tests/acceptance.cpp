// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "rlq/rlq.hpp"

using namespace rlq;
using fixtures::scalar;
using fixtures::vec1;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

const double kRoot = std::sqrt(2.0) - 1.0;

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

SimConfig config(double T, double dt, std::size_t paths, std::uint64_t seed = 0) {
    SimConfig c;
    c.T_max = T;
    c.dt = dt;
    c.n_paths = paths;
    c.seed = seed;
    return c;
}

Outcome weight_moments() {
    const std::size_t N = 100000;
    const std::vector<std::pair<double, double>> params = {{1, 0}, {1, 1}, {2, 2}};
    const std::vector<double> times = {0.5, 1.0, 2.0};
    double worst = -1.0;
    for (const auto& [E, F] : params) {
        std::vector<std::vector<double>> samples(times.size(), std::vector<double>(N));
        for (std::size_t p = 0; p < N; ++p) {
            PathRng rng(101, p);
            double W = 0.0, prev = 0.0;
            for (std::size_t i = 0; i < times.size(); ++i) {
                W += brownian_increment(rng, times[i] - prev, 0);
                prev = times[i];
                samples[i][p] = mu_exact(times[i], 0.0, W, {E, F});
            }
        }
        for (std::size_t i = 0; i < times.size(); ++i) {
            const MeanAndError ms = mean_and_se(samples[i]);
            const double excess = std::abs(ms.mean - std::exp(-E * times[i])) - 3.0 * ms.se;
            worst = std::max(worst, excess);
        }
    }
    return {worst <= 1e-14, "max (|mean - e^{-Es}| - 3SE) = " + sci(worst) + " over 9 cells"};
}

Outcome lyapunov_random() {
    std::mt19937_64 gen(2024);
    double worst_res = 0.0, worst_lin = 0.0;
    bool pd = true;
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = 1 + trial % 4;
        const Matrix A = fixtures::random_matrix(gen, n, n, 0.5);
        const Matrix C = fixtures::random_matrix(gen, n, n, 0.3);
        const double F = 0.25 * (trial % 5);
        const double E =
            max_eigenvalue(symmetrized(A + A.transpose() + C.transpose() * C)) + F * spectral_norm(C + C.transpose()) + 0.5;
        const Matrix L = fixtures::random_spd(gen, n);
        const Matrix P = solve_lyapunov({A, C, E, F, L});
        const Matrix P2 = solve_lyapunov({A, C, E, F, Matrix(2.0 * L)});
        worst_res = std::max(worst_res, weighted_lyapunov_residual(A, C, E, F, L, P).norm() / (L.norm() + P.norm()));
        worst_lin = std::max(worst_lin, (P2 - 2.0 * P).norm() / P.norm());
        pd = pd && is_positive_definite(P);
    }
    return {worst_res <= 1e-10 && worst_lin <= 1e-12 && pd,
            "max residual/(|L|+|P|) = " + sci(worst_res) + ", max linearity error = " + sci(worst_lin) +
                (pd ? ", all P > 0" : ", some P not PD")};
}

Outcome lyapunov_oracle() {
    struct Case {
        double A, C, E, F;
    };
    // Closed form 1/(E - 2A) when C = 0, F = 0; the last case is noisy.
    const std::vector<Case> cases = {{0.2, 0, 1, 0}, {-0.5, 0, 1, 0}, {0.3, 0, 2, 0}, {0, 0.5, 1, 1}};
    bool ok = true;
    std::string detail;
    for (const auto& c : cases) {
        const LyapunovProblem prob{scalar(c.A), scalar(c.C), c.E, c.F, scalar(1)};
        const double exact = solve_lyapunov(prob)(0, 0);
        if (c.C == 0.0 && c.F == 0.0) ok = ok && std::abs(exact - 1.0 / (c.E - 2.0 * c.A)) <= 1e-14;
        OracleOptions coarse;
        coarse.n_paths = 10000;
        coarse.dt = 1e-3;
        coarse.seed = 17;
        coarse.brownian_refine = 1;
        const OracleResult rc = lyapunov_mc_oracle(prob, coarse);
        OracleOptions fine = coarse;
        fine.dt = 0.5e-3;
        fine.brownian_refine = 0;
        fine.T_max = rc.T_max;
        const OracleResult rf = lyapunov_mc_oracle(prob, fine);
        const double bias = std::abs(rc.P(0, 0) - rf.P(0, 0));
        const double err = std::abs(rc.P(0, 0) - exact);
        const bool within = err <= 3.0 * rc.se(0, 0) + 3.0 * bias + rc.tail_estimate;
        ok = ok && within;
        if (c.C == 0.0 && c.F == 0.0) {
            const double ratio = std::abs(rf.P(0, 0) - exact) / std::abs(rc.P(0, 0) - exact);
            ok = ok && std::abs(ratio - 0.5) <= 0.15;
            detail += "A=" + sci(c.A) + ": err " + sci(err) + " halving " + sci(ratio) + "; ";
        } else {
            detail += "noisy: err " + sci(err) + " (3SE " + sci(3.0 * rc.se(0, 0)) + ")";
        }
    }
    return {ok, detail};
}

Outcome transform_equivalence() {
    std::mt19937_64 gen(77);
    double worst = 0.0;
    int compared = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = 1 + trial % 3, m = 1 + trial % 2;
        const ProblemSpec spec = fixtures::random_strict_instance(gen, n, m);
        const Matrix Theta = fixtures::random_matrix(gen, m, n, 0.2);
        const TransformedSystem ts = to_classical(spec);
        const Matrix I = identity(n);
        const Matrix Pw =
            solve_weighted_lyapunov(spec.A() + spec.B() * Theta, spec.C() + spec.D() * Theta, spec.E(), spec.F(), I);
        const Matrix Pc = solve_generalized_lyapunov(ts.At + ts.Bt * Theta, ts.Ct + ts.Dt * Theta, I);
        worst = std::max(worst, (Pw - Pc).norm() / Pw.norm());
        ++compared;
    }
    return {compared == 100 && worst <= 1e-12, "max relative difference " + sci(worst) + " over 100 pairs"};
}

Outcome are() {
    bool ok = true;
    std::string detail;
    for (double F : {0.0, 2.0}) {
        const AreSolution s = solve_are(fixtures::value_instance(F));
        const double err = std::abs(s.P(0, 0) - kRoot);
        ok = ok && err <= 1e-10;
        detail += "F=" + sci(F) + ": |P - (sqrt2-1)| = " + sci(err) + "; ";
    }
    std::mt19937_64 gen(5);
    double worst = 0.0;
    int max_iter = 0;
    for (int trial = 0; trial < 30; ++trial) {
        const Eigen::Index n = 1 + trial % 3, m = 1 + (trial / 3) % 2;
        const ProblemSpec spec = fixtures::random_strict_instance(gen, n, m);
        const AreSolution s = solve_are(spec);
        worst = std::max(worst, are_residual(spec, s.P).norm() / (1.0 + s.P.norm()));
        max_iter = std::max(max_iter, s.iterations);
        ok = ok && is_stabilizer(s.Theta_bar, spec).stable;
    }
    ok = ok && worst <= 1e-10 && max_iter <= 25;
    detail += "30 random: max residual/(1+|P|) " + sci(worst) + ", max iterations " + std::to_string(max_iter);
    return {ok, detail};
}

Outcome cost_identity() {
    ProblemData d = fixtures::value_instance(1.5).data();
    d.A = scalar(-0.3);
    d.C = scalar(0.4);
    d.D = scalar(0.3);
    d.S = scalar(0.2);
    d.q = DeterministicSignal::exp_decay(vec1(0.5), 0.7);
    d.r = DeterministicSignal::constant(vec1(-0.2));
    const ProblemSpec spec(d);
    const PathEnsemble ens = simulate_state(spec, ControlLaw::feedback(scalar(-0.5)), config(2, 1e-3, 100, 8));
    const auto weighted = weighted_integrand_paths(spec, ens);
    double worst = 0.0;
    std::size_t points = 0;
    for (std::size_t p = 0; p < ens.X.size(); ++p) {
        const auto nu = nu_path(ens.t, ens.W[p], {spec.E(), spec.F()});
        const MappedPaths mp = map_state_control_path(ens.X[p], ens.u[p], nu);
        const auto tilde = transformed_integrand_path(spec, ens.t, mp.first, mp.second, nu);
        for (std::size_t k = 0; k < ens.t.size(); ++k, ++points) {
            if (weighted[p][k] == tilde[k]) continue;
            worst = std::max(worst, std::abs(weighted[p][k] - tilde[k]) / std::abs(weighted[p][k]));
        }
    }
    return {worst <= 1e-10, "max relative difference " + sci(worst) + " over " + std::to_string(points) + " points"};
}

Outcome value_check() {
    const ProblemSpec spec = fixtures::value_instance();
    const SynthesisResult syn = synthesize(spec, {0.0});
    const ControlLaw law = ControlLaw::closed_loop(syn);
    SimConfig cfg = config(8, 1e-3, 20000, 1);
    cfg.brownian_refine = 1;
    const SimulationReport rep = estimate_cost(spec, law, cfg);
    SimConfig fine = cfg;
    fine.dt = 0.5e-3;
    fine.brownian_refine = 0;
    const SimulationReport rf = estimate_cost(spec, law, fine);
    const double bias = std::abs(rep.cost_mean - rf.cost_mean);
    const double err = std::abs(rep.cost_mean - value_homogeneous(spec, syn.P, spec.x0()));
    const double tol = 3.0 * rep.cost_se + rep.tail_bound + 3.0 * bias;
    return {err <= tol, "J_MC = " + sci(rep.cost_mean) + ", |J - x'Px| = " + sci(err) + " <= " + sci(tol) +
                            " (3SE " + sci(3.0 * rep.cost_se) + ", tail " + sci(rep.tail_bound) + ", dt-bias " +
                            sci(bias) + ")"};
}

Outcome stationarity() {
    const ProblemSpec spec = fixtures::value_instance();
    const SynthesisResult syn = synthesize(spec, {0.0});
    SimConfig coarse = config(8, 2e-3, 20, 3);
    coarse.brownian_refine = 1;
    const SimConfig fine = config(8, 1e-3, 20, 3);
    const SimulationReport a = stationarity_residual(spec, syn, coarse);
    const SimulationReport b = stationarity_residual(spec, syn, fine);
    SynthesisResult bad = syn;
    bad.Theta_bar(0, 0) += 0.1;
    const SimulationReport c = stationarity_residual(spec, bad, fine);
    const double ratio = *b.stationarity_rms / *a.stationarity_rms;
    const bool small = *b.stationarity_rms <= 10.0 * fine.dt * *b.stationarity_scale;
    const bool halves = std::abs(ratio - 0.5) <= 0.15;
    const bool separated = *c.stationarity_rms > 10.0 * *b.stationarity_rms;
    return {small && halves && separated, "rms " + sci(*b.stationarity_rms) + " (bound " +
                                              sci(10.0 * fine.dt * *b.stationarity_scale) + "), halving " + sci(ratio) +
                                              ", perturbed gain " + sci(*c.stationarity_rms)};
}

Outcome optimality() {
    const ProblemSpec spec = fixtures::value_instance();
    const SynthesisResult syn = synthesize(spec, {0.0});
    const ProbeReport rep = optimality_probe(spec, syn, config(12, 1e-3, 4), 20, 9, {0.05, 0.1, 0.2}, false);
    const double slack = 1e-12 * (1.0 + std::abs(rep.baseline_cost));
    const bool ok = rep.worst_margin >= -slack && rep.min_r_squared > 0.9;
    return {ok, "20 perturbations: min(dJ + 3SE) = " + sci(rep.worst_margin) + ", min R^2 = " + sci(rep.min_r_squared)};
}

Outcome reduction() {
    ProblemData d = fixtures::scalar_instance(-1, 1, 0, 0, 1, 0, 1, 1).data();
    d.b = DeterministicSignal::constant(vec1(1.0));
    const ProblemSpec spec(d);
    SimConfig cfg = config(30, 1e-3, 1000, 4);
    cfg.brownian_refine = 1;
    const ReductionResult r = reduce_nonhomogeneous(spec, cfg);
    SimConfig fine = cfg;
    fine.dt = 0.5e-3;
    fine.brownian_refine = 0;
    const ReductionResult rf = reduce_nonhomogeneous(spec, fine);
    const double err = std::abs(r.phi.mean - 1.0 / 3.0);
    const double tol = 3.0 * r.phi.se + 3.0 * std::abs(r.phi.mean - rf.phi.mean);

    // Same check with noise, where superposition is the only exact statement.
    ProblemData dn = d;
    dn.C = scalar(0.4);
    dn.D = scalar(0.2);
    dn.F = 0.5;
    dn.sigma = DeterministicSignal::exp_decay(vec1(0.3), 0.5);
    const ReductionResult rn = reduce_nonhomogeneous(ProblemSpec(dn), config(5, 1e-3, 200, 4),
                                                     ControlLaw::feedback(scalar(-0.4)));
    const double sup = std::max(r.superposition_error, rn.superposition_error);
    return {err <= tol && sup <= 1e-12, "phi = " + sci(r.phi.mean) + ", |phi - 1/3| = " + sci(err) + " <= " + sci(tol) +
                                            ", superposition max error " + sci(sup)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"1  weight moments", weight_moments},
        {"2  lyapunov solver", lyapunov_random},
        {"3  lyapunov MC oracle", lyapunov_oracle},
        {"4  transform equivalence", transform_equivalence},
        {"5  riccati", are},
        {"6  cost identity", cost_identity},
        {"7  value check", value_check},
        {"8  stationarity", stationarity},
        {"9  optimality probe", optimality},
        {"10 nonhomogeneous reduction", reduction},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s  %-28s %7.2fs  %s\n", o.passed ? "PASS" : "FAIL", name.c_str(), secs, o.detail.c_str());
        std::fflush(stdout);
        failed += o.passed ? 0 : 1;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
