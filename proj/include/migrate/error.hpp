#pragma once

#include <stdexcept>
#include <string>

namespace migrate {

// Every failure the library raises carries one of these codes.  Codes split
// into two families: bad input (rejected before any numerics run) and
// numerical failures (detected while running).  The CLI maps the families to
// distinct exit codes.
enum class ErrorCode {
  // input / validation
  DuplicateId,
  InconsistentContainment,
  UnknownMember,
  AmbiguousMember,
  PartitionMismatch,
  DimensionMismatch,
  NonPositiveFactor,
  NegativeEntry,
  NoDates,
  EmptyAfterCleaning,
  MissingMonth,
  UnknownArea,
  MissingComponent,
  AlreadyAdjusted,
  ZeroEstimate,
  LengthMismatch,
  MissingCentroids,
  EmptyRegion,
  ZeroBaseShare,
  BadFormat,
  BadConfig,
  IoFailure,
  // numerical
  NonFiniteInput,
  InconsistentMarginals,
  ZeroVariance,
  ZeroTotal,
  RawPerfect,
  SingularSystem,
};

constexpr bool is_numerical(ErrorCode c) {
  switch (c) {
    case ErrorCode::NonFiniteInput:
    case ErrorCode::InconsistentMarginals:
    case ErrorCode::ZeroVariance:
    case ErrorCode::ZeroTotal:
    case ErrorCode::RawPerfect:
    case ErrorCode::SingularSystem:
      return true;
    default:
      return false;
  }
}

const char* error_code_name(ErrorCode c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace migrate
