#include "migrate/error.hpp"

namespace migrate {

const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::InconsistentContainment: return "InconsistentContainment";
    case ErrorCode::UnknownMember: return "UnknownMember";
    case ErrorCode::AmbiguousMember: return "AmbiguousMember";
    case ErrorCode::PartitionMismatch: return "PartitionMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonPositiveFactor: return "NonPositiveFactor";
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::NoDates: return "NoDates";
    case ErrorCode::EmptyAfterCleaning: return "EmptyAfterCleaning";
    case ErrorCode::MissingMonth: return "MissingMonth";
    case ErrorCode::UnknownArea: return "UnknownArea";
    case ErrorCode::MissingComponent: return "MissingComponent";
    case ErrorCode::AlreadyAdjusted: return "AlreadyAdjusted";
    case ErrorCode::ZeroEstimate: return "ZeroEstimate";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MissingCentroids: return "MissingCentroids";
    case ErrorCode::EmptyRegion: return "EmptyRegion";
    case ErrorCode::ZeroBaseShare: return "ZeroBaseShare";
    case ErrorCode::BadFormat: return "BadFormat";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::InconsistentMarginals: return "InconsistentMarginals";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::ZeroTotal: return "ZeroTotal";
    case ErrorCode::RawPerfect: return "RawPerfect";
    case ErrorCode::SingularSystem: return "SingularSystem";
  }
  return "Unknown";
}

}  // namespace migrate
