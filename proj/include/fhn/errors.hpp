#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fhn {

enum class ErrorCode {
    DriftNotConfining,
    Rho0OutOfBounds,
    MassNotNormalized,
    GridTooCoarse,
    GridTooNarrow,
    KernelNotFinite,
    InvalidConfig,
    EmptyNode,
    CflViolation,
    BoundaryMassExceeded,
    UnsupportedInitial,
    NonFinite,
    MissingCompanions,
    MissingMacroPath,
    DegenerateQuantiles,
    DimensionMismatch,
    TooLarge,
    QOutOfRange,
    GridMismatch,
    FitDegenerate,
    Io,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::DriftNotConfining: return "DriftNotConfining";
        case ErrorCode::Rho0OutOfBounds: return "Rho0OutOfBounds";
        case ErrorCode::MassNotNormalized: return "MassNotNormalized";
        case ErrorCode::GridTooCoarse: return "GridTooCoarse";
        case ErrorCode::GridTooNarrow: return "GridTooNarrow";
        case ErrorCode::KernelNotFinite: return "KernelNotFinite";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::EmptyNode: return "EmptyNode";
        case ErrorCode::CflViolation: return "CflViolation";
        case ErrorCode::BoundaryMassExceeded: return "BoundaryMassExceeded";
        case ErrorCode::UnsupportedInitial: return "UnsupportedInitial";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::MissingCompanions: return "MissingCompanions";
        case ErrorCode::MissingMacroPath: return "MissingMacroPath";
        case ErrorCode::DegenerateQuantiles: return "DegenerateQuantiles";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::TooLarge: return "TooLarge";
        case ErrorCode::QOutOfRange: return "QOutOfRange";
        case ErrorCode::GridMismatch: return "GridMismatch";
        case ErrorCode::FitDegenerate: return "FitDegenerate";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace fhn
