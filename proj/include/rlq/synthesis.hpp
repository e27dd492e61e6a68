#pragma once

// Closed-loop optimal strategy (Θ̄, v̄) for the recursive-cost problem.
//
//   ARE (original coordinates)
//     PA + AᵀP + CᵀPC + Q − EP − F(PC + CᵀP)
//       − (BᵀP + DᵀPC + S − FDᵀP)ᵀ(R + DᵀPD)⁻¹(BᵀP + DᵀPC + S − FDᵀP) = 0
//   gain      Θ̄ = −(R + DᵀPD)⁻¹(BᵀP + DᵀPC + S − FDᵀP)
//   affine    dη = −[Mη + Θ̄ᵀr + q]ds,  M = (A − EI − FC + (B − FD)Θ̄)ᵀ,  η(∞) = 0
//             v̄ = −(R + DᵀPD)⁻¹[(B − FD)ᵀη + r]
//
// The ARE is solved in transformed coordinates, where it is the classical
// stochastic ARE, and everything returned is in original coordinates.

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "rlq/error.hpp"
#include "rlq/linalg.hpp"
#include "rlq/model.hpp"
#include "rlq/riccati.hpp"
#include "rlq/stability.hpp"
#include "rlq/transform.hpp"

namespace rlq {

struct AreSolution {
    Matrix P;
    Matrix Theta_bar;
    Matrix initial_gain;
    int iterations = 0;
    double residual = 0.0;  // ‖ARE residual in original coordinates‖_F
    std::vector<double> step_norms;
};

inline Matrix are_residual(const ProblemSpec& spec, const Matrix& P) {
    const Matrix& A = spec.A();
    const Matrix& B = spec.B();
    const Matrix& C = spec.C();
    const Matrix& D = spec.D();
    const double E = spec.E();
    const double F = spec.F();
    const Matrix G = B.transpose() * P + D.transpose() * P * C + spec.S() - F * D.transpose() * P;
    return P * A + A.transpose() * P + C.transpose() * P * C + spec.Q() - E * P - F * (P * C + C.transpose() * P) -
           G.transpose() * solve_rplus(spec.R(), D, P, G);
}

/// Θ̄ = −(R + DᵀPD)⁻¹(BᵀP + DᵀPC + S − FDᵀP).
inline Matrix optimal_gain(const ProblemSpec& spec, const Matrix& P) {
    const Matrix& D = spec.D();
    const Matrix G = spec.B().transpose() * P + D.transpose() * P * spec.C() + spec.S() - spec.F() * D.transpose() * P;
    return -solve_rplus(spec.R(), D, P, G);
}

/// Same gain from the transformed data: −(R + D̃ᵀPD̃)⁻¹(B̃ᵀP + D̃ᵀPC̃ + S).
inline Matrix optimal_gain_transformed(const ProblemSpec& spec, const Matrix& P) {
    const TransformedSystem ts = to_classical(spec);
    return riccati_gain({ts.At, ts.Bt, ts.Ct, ts.Dt, spec.Q(), spec.S(), spec.R()}, P);
}

inline AreSolution solve_are(const ProblemSpec& spec, const NewtonKleinmanOptions& opt = {}) {
    AreSolution out;
    const Matrix zero = Matrix::Zero(spec.m(), spec.n());
    if (is_stabilizer(zero, spec).stable) {
        out.initial_gain = zero;
    } else {
        try {
            out.initial_gain = find_stabilizer(spec);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NotFound) throw;
            throw Error(ErrorCode::NoInitialStabilizer, "synthesis", "solve_are", "no weighted stabilizer found");
        }
    }

    const TransformedSystem ts = to_classical(spec);
    const RiccatiData data{ts.At, ts.Bt, ts.Ct, ts.Dt, spec.Q(), spec.S(), spec.R()};
    NewtonKleinmanResult nk = newton_kleinman(data, out.initial_gain, opt);

    out.P = symmetrized(nk.P);
    out.iterations = nk.iterations;
    out.step_norms = std::move(nk.step_norms);
    out.Theta_bar = optimal_gain(spec, out.P);
    out.residual = are_residual(spec, out.P).norm();
    if (!(out.residual <= 1e-10 * (1.0 + out.P.norm()))) {
        throw Error(ErrorCode::NotCertified, "synthesis", "solve_are",
                    "ARE residual " + std::to_string(out.residual) + " above tolerance");
    }
    const StabilityVerdict verdict = is_stabilizer(out.Theta_bar, spec);
    if (!verdict.stable) {
        throw Error(ErrorCode::NotCertified, "synthesis", "solve_are", "optimal gain fails the Lyapunov certificate: " + verdict.reason);
    }
    return out;
}

/// η sampled on a grid; linear interpolation between nodes, clamped to the
/// end values outside the grid.
struct EtaTrajectory {
    std::vector<double> times;
    Matrix values;  // n × times.size()

    void eval(double s, Vector& out) const {
        if (times.empty()) {
            out.setZero(values.rows());
            return;
        }
        if (s <= times.front()) {
            out = values.col(0);
            return;
        }
        if (s >= times.back()) {
            out = values.col(values.cols() - 1);
            return;
        }
        const auto it = std::upper_bound(times.begin(), times.end(), s);
        const auto k = static_cast<Eigen::Index>(it - times.begin());
        const double t0 = times[static_cast<std::size_t>(k - 1)];
        const double t1 = times[static_cast<std::size_t>(k)];
        const double w = (s - t0) / (t1 - t0);
        out = (1.0 - w) * values.col(k - 1) + w * values.col(k);
    }

    [[nodiscard]] Vector operator()(double s) const {
        Vector out;
        eval(s, out);
        return out;
    }
};

struct EtaOptions {
    bool force_quadrature = false;  // skip the closed forms (used to cross-check them)
    double abs_tol = 1e-12;
    double rel_tol = 1e-10;
    int max_intervals = 4000;
};

/// M = (A − EI − FC + (B − FD)Θ̄)ᵀ.
inline Matrix eta_matrix(const ProblemSpec& spec, const Matrix& Theta_bar) {
    const Eigen::Index n = spec.n();
    return (spec.A() - spec.E() * identity(n) - spec.F() * spec.C() + (spec.B() - spec.F() * spec.D()) * Theta_bar)
        .transpose();
}

namespace detail {

// 15-point Kronrod nodes on [−1, 1] (nonnegative half) with the embedded 7-point Gauss rule.
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851, 0.864864423359769072789712788640926,
    0.741531185599394439863864773280788, 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204, 0.104790010322250183839876322541518,
    0.140653259715525918745189590510238, 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780, 0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

struct GkPanel {
    double a, b;
    Vector value;
    double error;
};

template <typename Fn>
GkPanel gauss_kronrod(Fn&& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    Vector fc = f(c);
    Vector kron = kKronrodWeights[7] * fc;
    Vector gauss = kGaussWeights[3] * fc;
    for (int i = 0; i < 7; ++i) {
        const double x = h * kKronrodNodes[static_cast<std::size_t>(i)];
        Vector f1 = f(c - x);
        Vector f2 = f(c + x);
        kron += kKronrodWeights[static_cast<std::size_t>(i)] * (f1 + f2);
        if (i % 2 == 1) gauss += kGaussWeights[static_cast<std::size_t>(i / 2)] * (f1 + f2);
    }
    GkPanel p{a, b, h * kron, 0.0};
    p.error = (h * (kron - gauss)).norm();
    return p;
}

/// Globally adaptive Gauss–Kronrod on [a, b] for a vector integrand.
template <typename Fn>
Vector adaptive_integrate(Fn&& f, double a, double b, const EtaOptions& opt) {
    std::vector<GkPanel> panels{gauss_kronrod(f, a, b)};
    for (int iter = 0;; ++iter) {
        Vector total = Vector::Zero(panels.front().value.size());
        double err = 0.0;
        std::size_t worst = 0;
        for (std::size_t i = 0; i < panels.size(); ++i) {
            total += panels[i].value;
            err += panels[i].error;
            if (panels[i].error > panels[worst].error) worst = i;
        }
        if (err <= std::max(opt.abs_tol, opt.rel_tol * total.norm())) return total;
        if (static_cast<int>(panels.size()) >= opt.max_intervals) {
            throw Error(ErrorCode::QuadratureFailure, "synthesis", "solve_eta",
                        "error estimate " + std::to_string(err) + " after " + std::to_string(panels.size()) + " panels");
        }
        const GkPanel w = panels[worst];
        const double mid = 0.5 * (w.a + w.b);
        panels[worst] = gauss_kronrod(f, w.a, mid);
        panels.push_back(gauss_kronrod(f, mid, w.b));
    }
}

/// Smallest u (doubling from 1) with ‖e^{M u}‖₂·bound < 1e-12.
inline double eta_tail_length(const Matrix& M, double bound) {
    if (bound == 0.0) return 0.0;
    for (double u = 1.0; u <= 1e5; u *= 2.0) {
        const Matrix e = (M * u).exp();
        if (spectral_norm(e) * bound < 1e-12) return u;
    }
    throw Error(ErrorCode::QuadratureFailure, "synthesis", "solve_eta", "integrand envelope does not decay");
}

inline double signal_sup(const DeterministicSignal& sig, double from) {
    switch (sig.kind()) {
        case SignalKind::Zero: return 0.0;
        case SignalKind::Constant: return sig.values().front().norm();
        case SignalKind::ExpDecay: return sig.values().front().norm() * std::exp(-sig.rate() * from);
        case SignalKind::PiecewiseConstant: {
            double m = 0.0;
            for (const auto& v : sig.values()) m = std::max(m, v.norm());
            return m;
        }
    }
    return 0.0;
}

inline bool has_infinite_tail(const DeterministicSignal& sig) {
    return !sig.is_zero() && (sig.kind() == SignalKind::Constant || sig.kind() == SignalKind::ExpDecay);
}

}  // namespace detail

/// η(s) = ∫_s^∞ e^{M(τ − s)}(Θ̄ᵀr(τ) + q(τ)) dτ on the requested grid.
///
/// Constant and exponentially decaying pieces use the closed forms
/// −M⁻¹c and e^{−δs}(δI − M)⁻¹a; piecewise-constant pieces (or everything,
/// with force_quadrature) go through adaptive Gauss–Kronrod, split at the
/// signal breakpoints and truncated where the integrand envelope drops
/// below 1e-12.
inline EtaTrajectory solve_eta(const ProblemSpec& spec, const Matrix& Theta_bar, std::vector<double> grid,
                               const EtaOptions& opt = {}) {
    const Eigen::Index n = spec.n();
    EtaTrajectory out;
    out.times = std::move(grid);
    out.values = Matrix::Zero(n, static_cast<Eigen::Index>(out.times.size()));
    if (spec.cost_is_homogeneous()) return out;

    const Matrix M = eta_matrix(spec, Theta_bar);
    const double abscissa = spectral_abscissa(M);
    if (!(abscissa < 0.0)) {
        throw Error(ErrorCode::NotHurwitz, "synthesis", "solve_eta",
                    "largest real part of M is " + std::to_string(abscissa));
    }
    const Matrix ThT = Theta_bar.transpose();
    Eigen::PartialPivLU<Matrix> M_lu(M);

    struct Piece {
        const DeterministicSignal* sig;
        Matrix map;  // n × dim(sig)
    };
    const std::array<Piece, 2> pieces{Piece{&spec.q(), identity(n)}, Piece{&spec.r(), ThT}};

    std::vector<const Piece*> numeric;
    for (const auto& p : pieces) {
        if (p.sig->is_zero()) continue;
        const bool closed = !opt.force_quadrature &&
                            (p.sig->kind() == SignalKind::Constant || p.sig->kind() == SignalKind::ExpDecay);
        if (!closed) {
            numeric.push_back(&p);
            continue;
        }
        if (p.sig->kind() == SignalKind::Constant) {
            const Vector contrib = -M_lu.solve(p.map * p.sig->values().front());
            out.values.colwise() += contrib;
        } else {
            const double delta = p.sig->rate();
            const Vector base = (delta * identity(n) - M).partialPivLu().solve(p.map * p.sig->values().front());
            for (std::size_t k = 0; k < out.times.size(); ++k)
                out.values.col(static_cast<Eigen::Index>(k)) += std::exp(-delta * out.times[k]) * base;
        }
    }
    if (numeric.empty()) return out;

    for (std::size_t k = 0; k < out.times.size(); ++k) {
        const double s = out.times[k];
        std::vector<double> cuts{s};
        bool infinite = false;
        double bound = 0.0;
        for (const Piece* p : numeric) {
            for (double bp : p->sig->breakpoints())
                if (bp > s) cuts.push_back(bp);
            infinite = infinite || detail::has_infinite_tail(*p->sig);
            bound += spectral_norm(p->map) * detail::signal_sup(*p->sig, s);
        }
        std::sort(cuts.begin(), cuts.end());
        cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
        if (infinite) cuts.push_back(cuts.back() + detail::eta_tail_length(M, bound));

        auto integrand = [&](double tau) {
            Vector g = Vector::Zero(n);
            Vector tmp;
            for (const Piece* p : numeric) {
                p->sig->eval(tau, tmp);
                g += p->map * tmp;
            }
            return Vector((M * (tau - s)).exp() * g);
        };
        Vector acc = Vector::Zero(n);
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) acc += detail::adaptive_integrate(integrand, cuts[i], cuts[i + 1], opt);
        out.values.col(static_cast<Eigen::Index>(k)) += acc;
    }
    return out;
}

/// s ↦ −(R + DᵀPD)⁻¹[(B − FD)ᵀη(s) + r(s)].
class Vbar {
public:
    Vbar() = default;
    Vbar(const ProblemSpec& spec, const Matrix& P, EtaTrajectory eta)
        : eta_(std::move(eta)), r_(spec.r()), BmFD_T_((spec.B() - spec.F() * spec.D()).transpose()) {
        const Eigen::Index m = spec.m();
        Rplus_inv_ = solve_rplus(spec.R(), spec.D(), P, identity(m), "synthesis", "assemble_vbar");
        zero_ = spec.cost_is_homogeneous();
    }

    void eval(double s, Vector& out, Vector& eta_buf, Vector& r_buf) const {
        if (zero_) {
            out.setZero(Rplus_inv_.rows());
            return;
        }
        eta_.eval(s, eta_buf);
        r_.eval(s, r_buf);
        out.noalias() = -Rplus_inv_ * (BmFD_T_ * eta_buf + r_buf);
    }

    [[nodiscard]] Vector operator()(double s) const {
        Vector out, a, b;
        eval(s, out, a, b);
        return out;
    }

    [[nodiscard]] bool is_zero() const noexcept { return zero_; }
    [[nodiscard]] const EtaTrajectory& eta() const noexcept { return eta_; }

private:
    EtaTrajectory eta_;
    DeterministicSignal r_;
    Matrix BmFD_T_;
    Matrix Rplus_inv_;
    bool zero_ = true;
};

inline Vbar assemble_vbar(const ProblemSpec& spec, const Matrix& P, EtaTrajectory eta) {
    return Vbar(spec, P, std::move(eta));
}

/// ⟨Px, x⟩.
inline double value_homogeneous(const Matrix& P, const Vector& x) { return x.dot(P * x); }

/// ⟨Px, x⟩, refusing problems with affine terms.
inline double value_homogeneous(const ProblemSpec& spec, const Matrix& P, const Vector& x) {
    if (!spec.cost_is_homogeneous() || !spec.dynamics_are_homogeneous()) {
        throw Error(ErrorCode::NotHomogeneous, "synthesis", "value_homogeneous", "q, r, b, sigma must vanish");
    }
    return value_homogeneous(P, x);
}

struct SynthesisResult {
    Matrix P;
    Matrix Theta_bar;
    EtaTrajectory eta;
    Vbar vbar;
    int iterations = 0;
    double residual = 0.0;
    double F = 0.0;

    /// ζ = −(F/2)η; never solved for independently.
    [[nodiscard]] Vector zeta(double s) const { return -0.5 * F * eta(s); }
};

inline SynthesisResult synthesize(const ProblemSpec& spec, std::vector<double> grid, const NewtonKleinmanOptions& nk = {},
                                  const EtaOptions& eta_opt = {}) {
    AreSolution are = solve_are(spec, nk);
    SynthesisResult out;
    out.P = are.P;
    out.Theta_bar = are.Theta_bar;
    out.iterations = are.iterations;
    out.residual = are.residual;
    out.F = spec.F();
    out.eta = solve_eta(spec, are.Theta_bar, std::move(grid), eta_opt);
    out.vbar = assemble_vbar(spec, out.P, out.eta);
    return out;
}

}  // namespace rlq
