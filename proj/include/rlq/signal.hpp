#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rlq/error.hpp"
#include "rlq/linalg.hpp"

namespace rlq {

enum class SignalKind { Zero, Constant, PiecewiseConstant, ExpDecay };

constexpr std::string_view to_string(SignalKind k) {
    switch (k) {
        case SignalKind::Zero: return "zero";
        case SignalKind::Constant: return "constant";
        case SignalKind::PiecewiseConstant: return "piecewise_constant";
        case SignalKind::ExpDecay: return "exp_decay";
    }
    return "unknown";
}

inline SignalKind signal_kind_from_string(std::string_view s) {
    if (s == "zero") return SignalKind::Zero;
    if (s == "constant") return SignalKind::Constant;
    if (s == "piecewise_constant") return SignalKind::PiecewiseConstant;
    if (s == "exp_decay") return SignalKind::ExpDecay;
    throw Error(ErrorCode::UnsupportedSignalKind, "model", "parse_signal", std::string(s));
}

/// Deterministic time signal from a closed family whose weighted square
/// integrability can be decided exactly.
///
///   zero                 s ↦ 0
///   constant             s ↦ value
///   piecewise_constant   s ↦ values[i] on [breakpoints[i], breakpoints[i+1]),
///                        0 before breakpoints[0]; the final value must be 0
///   exp_decay            s ↦ amplitude · e^{−rate·s},  rate > 0
class DeterministicSignal {
public:
    DeterministicSignal() = default;

    static DeterministicSignal zero(Eigen::Index dim) {
        DeterministicSignal s;
        s.kind_ = SignalKind::Zero;
        s.dim_ = dim;
        return s;
    }

    static DeterministicSignal constant(Vector value) {
        DeterministicSignal s;
        s.kind_ = SignalKind::Constant;
        s.dim_ = value.size();
        s.values_.push_back(std::move(value));
        return s;
    }

    static DeterministicSignal piecewise_constant(std::vector<double> breakpoints, std::vector<Vector> values) {
        if (breakpoints.empty() || breakpoints.size() != values.size()) {
            throw Error(ErrorCode::InvalidSignal, "model", "piecewise_constant",
                        "need one value per breakpoint and at least one breakpoint");
        }
        for (std::size_t i = 1; i < breakpoints.size(); ++i) {
            if (!(breakpoints[i] > breakpoints[i - 1])) {
                throw Error(ErrorCode::InvalidSignal, "model", "piecewise_constant",
                            "breakpoints must be strictly increasing");
            }
        }
        const Eigen::Index dim = values.front().size();
        for (const auto& v : values) {
            if (v.size() != dim) {
                throw Error(ErrorCode::DimensionMismatch, "model", "piecewise_constant",
                            "inconsistent value dimensions");
            }
            if (!v.allFinite()) throw Error(ErrorCode::InvalidSignal, "model", "piecewise_constant", "non-finite value");
        }
        if (values.back().cwiseAbs().maxCoeff() != 0.0) {
            throw Error(ErrorCode::InvalidSignal, "model", "piecewise_constant",
                        "value after the final breakpoint must be zero");
        }
        DeterministicSignal s;
        s.kind_ = SignalKind::PiecewiseConstant;
        s.dim_ = dim;
        s.breakpoints_ = std::move(breakpoints);
        s.values_ = std::move(values);
        return s;
    }

    static DeterministicSignal exp_decay(Vector amplitude, double rate) {
        if (!(rate > 0.0) || !std::isfinite(rate)) {
            throw Error(ErrorCode::InvalidSignal, "model", "exp_decay", "decay rate must be > 0");
        }
        DeterministicSignal s;
        s.kind_ = SignalKind::ExpDecay;
        s.dim_ = amplitude.size();
        s.values_.push_back(std::move(amplitude));
        s.rate_ = rate;
        return s;
    }

    [[nodiscard]] SignalKind kind() const noexcept { return kind_; }
    [[nodiscard]] Eigen::Index dim() const noexcept { return dim_; }
    [[nodiscard]] double rate() const noexcept { return rate_; }
    [[nodiscard]] const std::vector<double>& breakpoints() const noexcept { return breakpoints_; }
    [[nodiscard]] const std::vector<Vector>& values() const noexcept { return values_; }

    [[nodiscard]] bool is_zero() const {
        switch (kind_) {
            case SignalKind::Zero: return true;
            case SignalKind::Constant:
            case SignalKind::ExpDecay: return values_.front().cwiseAbs().maxCoeff() == 0.0;
            case SignalKind::PiecewiseConstant:
                for (const auto& v : values_)
                    if (v.cwiseAbs().maxCoeff() != 0.0) return false;
                return true;
        }
        return true;
    }

    /// Value at time s, written into out (resized if needed).
    void eval(double s, Vector& out) const {
        out.resize(dim_);
        switch (kind_) {
            case SignalKind::Zero: out.setZero(); return;
            case SignalKind::Constant: out = values_.front(); return;
            case SignalKind::ExpDecay: out = values_.front() * std::exp(-rate_ * s); return;
            case SignalKind::PiecewiseConstant: {
                if (s < breakpoints_.front()) {
                    out.setZero();
                    return;
                }
                const auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), s);
                out = values_[static_cast<std::size_t>(it - breakpoints_.begin()) - 1];
                return;
            }
        }
    }

    [[nodiscard]] Vector operator()(double s) const {
        Vector out;
        eval(s, out);
        return out;
    }

private:
    SignalKind kind_ = SignalKind::Zero;
    Eigen::Index dim_ = 0;
    std::vector<double> breakpoints_;
    std::vector<Vector> values_;
    double rate_ = 0.0;
};

}  // namespace rlq
