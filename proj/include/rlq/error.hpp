#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rlq {

enum class ErrorCode {
    DimensionMismatch,
    NotSymmetric,
    NotPositiveDefinite,
    NonIntegrableSignal,
    UnsupportedSignalKind,
    InvalidSignal,
    InvalidArgument,
    NonpositiveE,
    SingularOperator,
    TooLarge,
    DivergenceDetected,
    NotFound,
    NoInitialStabilizer,
    IterationDiverged,
    NotCertified,
    NotHurwitz,
    QuadratureFailure,
    SingularRplus,
    NotHomogeneous,
    GridMismatch,
    NumericalBlowup,
    NonIntegrableTail,
    HorizonRequired,
    OptimalityViolated,
    ParseError,
    IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NotSymmetric: return "NotSymmetric";
        case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorCode::NonIntegrableSignal: return "NonIntegrableSignal";
        case ErrorCode::UnsupportedSignalKind: return "UnsupportedSignalKind";
        case ErrorCode::InvalidSignal: return "InvalidSignal";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::NonpositiveE: return "NonpositiveE";
        case ErrorCode::SingularOperator: return "SingularOperator";
        case ErrorCode::TooLarge: return "TooLarge";
        case ErrorCode::DivergenceDetected: return "DivergenceDetected";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::NoInitialStabilizer: return "NoInitialStabilizer";
        case ErrorCode::IterationDiverged: return "IterationDiverged";
        case ErrorCode::NotCertified: return "NotCertified";
        case ErrorCode::NotHurwitz: return "NotHurwitz";
        case ErrorCode::QuadratureFailure: return "QuadratureFailure";
        case ErrorCode::SingularRplus: return "SingularRplus";
        case ErrorCode::NotHomogeneous: return "NotHomogeneous";
        case ErrorCode::GridMismatch: return "GridMismatch";
        case ErrorCode::NumericalBlowup: return "NumericalBlowup";
        case ErrorCode::NonIntegrableTail: return "NonIntegrableTail";
        case ErrorCode::HorizonRequired: return "HorizonRequired";
        case ErrorCode::OptimalityViolated: return "OptimalityViolated";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

/// Library error. Carries the failing module and operation so callers (the
/// CLI in particular) can report which contract was violated.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string module, std::string op, const std::string& detail)
        : std::runtime_error(format(code, module, op, detail)),
          code_(code),
          module_(std::move(module)),
          op_(std::move(op)),
          detail_(detail) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }
    [[nodiscard]] const std::string& module() const noexcept { return module_; }
    [[nodiscard]] const std::string& op() const noexcept { return op_; }
    [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

private:
    static std::string format(ErrorCode code, const std::string& module, const std::string& op,
                              const std::string& detail) {
        std::string out = module + "::" + op + ": " + std::string(to_string(code));
        if (!detail.empty()) out += " (" + detail + ")";
        return out;
    }

    ErrorCode code_;
    std::string module_;
    std::string op_;
    std::string detail_;
};

}  // namespace rlq
