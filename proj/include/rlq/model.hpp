#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rlq/error.hpp"
#include "rlq/linalg.hpp"
#include "rlq/lyapunov.hpp"
#include "rlq/signal.hpp"

namespace rlq {

/// Raw problem data as read from a file or assembled in code. Becomes a
/// ProblemSpec once dimensions and symmetry have been checked.
struct ProblemData {
    Matrix A, B, C, D;
    double E = 0.0;
    double F = 0.0;
    Matrix Q, S, R;
    DeterministicSignal q, r;
    std::optional<DeterministicSignal> b, sigma;
    double t0 = 0.0;
    Vector x0;
};

/// Infinite-horizon stochastic LQ problem with recursive cost
///
///   dX = (AX + Bu + b)ds + (CX + Du + σ)dW,   X(t0) = x0,
///   J  = 𝔼∫ (μ(s)/μ(t0)) [⟨QX,X⟩ + 2⟨SX,u⟩ + ⟨Ru,u⟩ + 2⟨q,X⟩ + 2⟨r,u⟩] ds,
///   dμ = −Eμ ds − Fμ dW.
///
/// Immutable. Q and R are symmetrized on construction (exactly symmetric
/// afterwards); inputs whose asymmetry exceeds 1e-12 relative are rejected.
class ProblemSpec {
public:
    explicit ProblemSpec(ProblemData data) : d_(std::move(data)) {
        const Eigen::Index n = d_.A.rows();
        const Eigen::Index m = d_.B.cols();
        auto require = [](bool ok, const std::string& what) {
            if (!ok) throw Error(ErrorCode::DimensionMismatch, "model", "validate", what);
        };
        require(n > 0, "n must be positive");
        require(m > 0, "m must be positive");
        require(d_.A.cols() == n, "A must be n x n");
        require(d_.B.rows() == n, "B must be n x m");
        require(d_.C.rows() == n && d_.C.cols() == n, "C must be n x n");
        require(d_.D.rows() == n && d_.D.cols() == m, "D must be n x m");
        require(d_.Q.rows() == n && d_.Q.cols() == n, "Q must be n x n");
        require(d_.S.rows() == m && d_.S.cols() == n, "S must be m x n");
        require(d_.R.rows() == m && d_.R.cols() == m, "R must be m x m");
        require(d_.x0.size() == n, "x0 must have length n");
        if (d_.q.dim() == 0) d_.q = DeterministicSignal::zero(n);
        if (d_.r.dim() == 0) d_.r = DeterministicSignal::zero(m);
        if (!d_.b) d_.b = DeterministicSignal::zero(n);
        if (!d_.sigma) d_.sigma = DeterministicSignal::zero(n);
        require(d_.q.dim() == n, "q must have dimension n");
        require(d_.r.dim() == m, "r must have dimension m");
        require(d_.b->dim() == n, "b must have dimension n");
        require(d_.sigma->dim() == n, "sigma must have dimension n");

        auto finite = [](const Matrix& M, const char* name) {
            if (!M.allFinite())
                throw Error(ErrorCode::InvalidArgument, "model", "validate", std::string(name) + " has non-finite entries");
        };
        finite(d_.A, "A");
        finite(d_.B, "B");
        finite(d_.C, "C");
        finite(d_.D, "D");
        finite(d_.Q, "Q");
        finite(d_.S, "S");
        finite(d_.R, "R");
        finite(d_.x0, "x0");
        if (!std::isfinite(d_.E) || !std::isfinite(d_.F))
            throw Error(ErrorCode::InvalidArgument, "model", "validate", "E and F must be finite");
        if (!(d_.t0 >= 0.0) || !std::isfinite(d_.t0))
            throw Error(ErrorCode::InvalidArgument, "model", "validate", "t0 must be a nonnegative real");

        for (auto [M, name] : {std::pair{&d_.Q, "Q"}, std::pair{&d_.R, "R"}}) {
            const double asym = asymmetry(*M);
            if (asym > 1e-12) {
                std::ostringstream os;
                os << name << " asymmetry " << asym;
                throw Error(ErrorCode::NotSymmetric, "model", "validate", os.str());
            }
            *M = symmetrized(*M);
        }
    }

    [[nodiscard]] Eigen::Index n() const noexcept { return d_.A.rows(); }
    [[nodiscard]] Eigen::Index m() const noexcept { return d_.B.cols(); }
    [[nodiscard]] const Matrix& A() const noexcept { return d_.A; }
    [[nodiscard]] const Matrix& B() const noexcept { return d_.B; }
    [[nodiscard]] const Matrix& C() const noexcept { return d_.C; }
    [[nodiscard]] const Matrix& D() const noexcept { return d_.D; }
    [[nodiscard]] double E() const noexcept { return d_.E; }
    [[nodiscard]] double F() const noexcept { return d_.F; }
    [[nodiscard]] const Matrix& Q() const noexcept { return d_.Q; }
    [[nodiscard]] const Matrix& S() const noexcept { return d_.S; }
    [[nodiscard]] const Matrix& R() const noexcept { return d_.R; }
    [[nodiscard]] const DeterministicSignal& q() const noexcept { return d_.q; }
    [[nodiscard]] const DeterministicSignal& r() const noexcept { return d_.r; }
    [[nodiscard]] const DeterministicSignal& b() const noexcept { return *d_.b; }
    [[nodiscard]] const DeterministicSignal& sigma() const noexcept { return *d_.sigma; }
    [[nodiscard]] double t0() const noexcept { return d_.t0; }
    [[nodiscard]] const Vector& x0() const noexcept { return d_.x0; }
    [[nodiscard]] const ProblemData& data() const noexcept { return d_; }

    /// q = r = 0.
    [[nodiscard]] bool cost_is_homogeneous() const { return d_.q.is_zero() && d_.r.is_zero(); }
    /// b = σ = 0.
    [[nodiscard]] bool dynamics_are_homogeneous() const { return d_.b->is_zero() && d_.sigma->is_zero(); }

    /// Copy with some fields replaced.
    template <typename Fn>
    [[nodiscard]] ProblemSpec with(Fn&& edit) const {
        ProblemData copy = d_;
        edit(copy);
        return ProblemSpec(std::move(copy));
    }

private:
    ProblemData d_;
};

/// Whether ∫ e^{−E s}|sig(s)|² ds < ∞. Only the mean e^{−Es} of the weight
/// matters because the signal is deterministic.
inline bool check_weighted_integrability(const DeterministicSignal& sig, double E) {
    switch (sig.kind()) {
        case SignalKind::Zero: return true;
        case SignalKind::Constant: return sig.is_zero() || E > 0.0;
        case SignalKind::PiecewiseConstant: return true;
        case SignalKind::ExpDecay: return sig.is_zero() || E + 2.0 * sig.rate() > 0.0;
    }
    throw Error(ErrorCode::UnsupportedSignalKind, "model", "check_weighted_integrability", "");
}

enum class ValidationMode { Strict, Permissive };

struct HypothesisCheck {
    std::string name;
    bool passed = false;
    std::string detail;
    std::optional<double> eigenvalue;  // smallest eigenvalue, where one is involved
};

struct ValidationReport {
    ValidationMode mode = ValidationMode::Strict;
    std::vector<HypothesisCheck> checks;

    [[nodiscard]] bool all_passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
    [[nodiscard]] const HypothesisCheck* find(std::string_view name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
};

/// Checks the standing hypotheses on a constructed spec.
///
/// Dimensions and symmetry are already enforced by ProblemSpec. Signal
/// integrability is asserted in both modes. Strict mode additionally asserts
/// E > 0, F ≥ 0, Q ≻ 0, R ≻ 0 and Q − SᵀR⁻¹S ≻ 0; permissive mode only records
/// them. Whether the zero gain is a weighted stabilizer is recorded in both
/// modes and never fatal here, since synthesis can search for a stabilizer.
inline ValidationReport validate(const ProblemSpec& spec, ValidationMode mode = ValidationMode::Strict) {
    ValidationReport rep;
    rep.mode = mode;
    const bool strict = mode == ValidationMode::Strict;

    rep.checks.push_back({"H1.dimensions", true, "n=" + std::to_string(spec.n()) + " m=" + std::to_string(spec.m()), {}});

    for (auto [sig, name] : {std::pair{&spec.q(), "q"}, std::pair{&spec.r(), "r"}, std::pair{&spec.b(), "b"},
                             std::pair{&spec.sigma(), "sigma"}}) {
        const bool ok = check_weighted_integrability(*sig, spec.E());
        rep.checks.push_back({std::string("H2.integrable.") + name, ok, std::string(to_string(sig->kind())), {}});
        if (!ok) {
            throw Error(ErrorCode::NonIntegrableSignal, "model", "validate",
                        std::string(name) + " is not weighted-square-integrable for E = " + std::to_string(spec.E()));
        }
    }

    {
        const bool ok = spec.E() > 0.0;
        rep.checks.push_back({"H2.E_positive", ok, "E=" + std::to_string(spec.E()), {}});
        if (strict && !ok) throw Error(ErrorCode::NonpositiveE, "model", "validate", "E must be > 0");
    }
    {
        const bool ok = spec.F() >= 0.0;
        rep.checks.push_back({"H2.F_nonnegative", ok, "F=" + std::to_string(spec.F()), {}});
        if (strict && !ok) throw Error(ErrorCode::InvalidArgument, "model", "validate", "F must be >= 0");
    }

    auto pd_check = [&](const Matrix& M, const std::string& name) {
        const bool ok = is_positive_definite(M);
        const double ev = min_eigenvalue(M);
        std::ostringstream os;
        os << "min eigenvalue " << ev;
        rep.checks.push_back({"H4." + name + "_pd", ok, os.str(), ev});
        if (strict && !ok) {
            throw Error(ErrorCode::NotPositiveDefinite, "model", "validate", name + ", smallest eigenvalue " + std::to_string(ev));
        }
        return ok;
    };
    pd_check(spec.Q(), "Q");
    const bool r_pd = pd_check(spec.R(), "R");
    if (r_pd) {
        const Matrix schur = symmetrized(spec.Q() - spec.S().transpose() * spec.R().llt().solve(spec.S()));
        pd_check(schur, "Q-S'R^-1S");
    } else {
        rep.checks.push_back({"H4.Q-S'R^-1S_pd", false, "R not invertible", {}});
    }

    // 0 ∈ weighted stabilizers, i.e. [A, C] weighted L²-stable.
    {
        HypothesisCheck c{"H4.zero_gain_stabilizes", false, "", {}};
        try {
            const Matrix P = solve_weighted_lyapunov(spec.A(), spec.C(), spec.E(), spec.F(), identity(spec.n()));
            const double ev = min_eigenvalue(P);
            c.passed = is_positive_definite(P);
            c.eigenvalue = ev;
            c.detail = "min eigenvalue of P " + std::to_string(ev);
        } catch (const Error& e) {
            c.detail = std::string(to_string(e.code()));
        }
        rep.checks.push_back(std::move(c));
    }
    return rep;
}

}  // namespace rlq
