#pragma once

#include <stdexcept>
#include <string>

namespace mertontc {

enum class ErrorCode {
    // parameter validation
    BadRange,
    IllPosed,
    UnitMerton,
    // field evaluation
    DenominatorZero,
    OutOfDomain,
    OutOfRange,
    // leg integration
    NoFlatPoint,
    StiffnessFailure,
    // shooting / value
    BracketFailure,
    RootNotBracketed,
    Insolvent,
    // power series
    CenterMismatch,
    DivisionByZeroConstantTerm,
    NonpositiveConstantTerm,
    NotInvertible,
    // expansion pipeline
    SingularDenominator,
    NoConvergence,
    BranchAmbiguity,
    LeadingCoefficientZero,
    BranchSelectionFailure,
    CaseBoundary,
    // validation layer
    HZero,
    SignChange,
    DegenerateFit,
    // configuration / IO
    InvalidInput,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::BadRange: return "BadRange";
        case ErrorCode::IllPosed: return "IllPosed";
        case ErrorCode::UnitMerton: return "UnitMerton";
        case ErrorCode::DenominatorZero: return "DenominatorZero";
        case ErrorCode::OutOfDomain: return "OutOfDomain";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::NoFlatPoint: return "NoFlatPoint";
        case ErrorCode::StiffnessFailure: return "StiffnessFailure";
        case ErrorCode::BracketFailure: return "BracketFailure";
        case ErrorCode::RootNotBracketed: return "RootNotBracketed";
        case ErrorCode::Insolvent: return "Insolvent";
        case ErrorCode::CenterMismatch: return "CenterMismatch";
        case ErrorCode::DivisionByZeroConstantTerm: return "DivisionByZeroConstantTerm";
        case ErrorCode::NonpositiveConstantTerm: return "NonpositiveConstantTerm";
        case ErrorCode::NotInvertible: return "NotInvertible";
        case ErrorCode::SingularDenominator: return "SingularDenominator";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::BranchAmbiguity: return "BranchAmbiguity";
        case ErrorCode::LeadingCoefficientZero: return "LeadingCoefficientZero";
        case ErrorCode::BranchSelectionFailure: return "BranchSelectionFailure";
        case ErrorCode::CaseBoundary: return "CaseBoundary";
        case ErrorCode::HZero: return "HZero";
        case ErrorCode::SignChange: return "SignChange";
        case ErrorCode::DegenerateFit: return "DegenerateFit";
        case ErrorCode::InvalidInput: return "InvalidInput";
    }
    return "Unknown";
}

/// Exception carrying a machine-readable error code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace mertontc
