#include "loom/error.hpp"

namespace loom {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kMalformedRecord: return "MalformedRecord";
    case ErrorCode::kNonMonotonicTime: return "NonMonotonicTime";
    case ErrorCode::kBinCountZero: return "BinCountZero";
    case ErrorCode::kCountMismatch: return "CountMismatch";
    case ErrorCode::kBehindCamera: return "BehindCamera";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kUndefinedTtc: return "UndefinedTTC";
    case ErrorCode::kUndefinedEta: return "UndefinedEta";
    case ErrorCode::kNonPositiveHeight: return "NonPositiveHeight";
    case ErrorCode::kSingularInnovationCovariance: return "SingularInnovationCovariance";
    case ErrorCode::kNoEvents: return "NoEvents";
    case ErrorCode::kFlatObjective: return "FlatObjective";
    case ErrorCode::kInvalidPrediction: return "InvalidPrediction";
    case ErrorCode::kNoMatches: return "NoMatches";
    case ErrorCode::kDegenerateSpec: return "DegenerateSpec";
  }
  return "Unknown";
}

bool is_numeric_failure(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNoConvergence:
    case ErrorCode::kUndefinedTtc:
    case ErrorCode::kUndefinedEta:
    case ErrorCode::kSingularInnovationCovariance:
    case ErrorCode::kNoEvents:
    case ErrorCode::kFlatObjective:
    case ErrorCode::kInvalidPrediction:
    case ErrorCode::kNoMatches:
    case ErrorCode::kBehindCamera:
      return true;
    default:
      return false;
  }
}

}  // namespace loom
