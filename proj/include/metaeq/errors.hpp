#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace metaeq {

enum class ErrorCode {
  NotSquare,
  NotSymmetric,
  NotPositiveDefinite,
  DimensionMismatch,
  IllConditioned,
  AssumptionA1Violated,
  AssumptionA2Violated,
  OmegaNotSpd,
  MNotSpd,
  MaxIterationsExceeded,
  NonFiniteEncountered,
  ClosedFormResidual,
  InvalidArgument,
  ParseError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotSquare: return "NotSquare";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::AssumptionA1Violated: return "AssumptionA1Violated";
    case ErrorCode::AssumptionA2Violated: return "AssumptionA2Violated";
    case ErrorCode::OmegaNotSpd: return "OmegaNotSpd";
    case ErrorCode::MNotSpd: return "MNotSpd";
    case ErrorCode::MaxIterationsExceeded: return "MaxIterationsExceeded";
    case ErrorCode::NonFiniteEncountered: return "NonFiniteEncountered";
    case ErrorCode::ClosedFormResidual: return "ClosedFormResidual";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Base of every error raised by the library. The code is what callers
/// dispatch on (the CLI maps codes to exit statuses).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  /// Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

/// Raised when a factorisation meets a nonpositive pivot. `pivot` is the
/// zero-based index of the offending leading minor.
class NotPositiveDefiniteError : public Error {
 public:
  NotPositiveDefiniteError(Eigen::Index pivot, double min_eigenvalue,
                           const std::string& detail)
      : Error(ErrorCode::NotPositiveDefinite, detail),
        pivot_(pivot),
        min_eigenvalue_(min_eigenvalue) {}

  Eigen::Index pivot() const noexcept { return pivot_; }
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

 private:
  Eigen::Index pivot_;
  double min_eigenvalue_;
};

/// Assumption violation on the joint model. `block` names the failing
/// matrix ("v1", "v2" or "sigma").
class AssumptionError : public Error {
 public:
  AssumptionError(ErrorCode code, std::string block, const std::string& detail)
      : Error(code, detail), block_(std::move(block)) {}

  const std::string& block() const noexcept { return block_; }

 private:
  std::string block_;
};

}  // namespace metaeq
