#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace delelstm {

enum class ErrorCode {
  ShapeMismatch,
  SolveFailure,
  NonScalarLoss,
  UnderdeterminedWithoutRidge,
  DegenerateWeights,
  DegeneratePair,
  EmptySequence,
  NonFiniteLoss,
  AllZeroTargets,
  MissingTarget,
  EmptyTable,
  ParseError,
  TooShort,
  ZeroVariance,
  DimensionMismatch,
  InvalidConfig,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::SolveFailure: return "SolveFailure";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::UnderdeterminedWithoutRidge: return "UnderdeterminedWithoutRidge";
    case ErrorCode::DegenerateWeights: return "DegenerateWeights";
    case ErrorCode::DegeneratePair: return "DegeneratePair";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::AllZeroTargets: return "AllZeroTargets";
    case ErrorCode::MissingTarget: return "MissingTarget";
    case ErrorCode::EmptyTable: return "EmptyTable";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace delelstm
