#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace loom {

enum class ErrorCode {
  kInvalidArgument,
  kIo,
  kMalformedRecord,
  kNonMonotonicTime,
  kBinCountZero,
  kCountMismatch,
  kBehindCamera,
  kNoConvergence,
  kUndefinedTtc,
  kUndefinedEta,
  kNonPositiveHeight,
  kSingularInnovationCovariance,
  kNoEvents,
  kFlatObjective,
  kInvalidPrediction,
  kNoMatches,
  kDegenerateSpec,
};

std::string_view to_string(ErrorCode code);

// True for codes that stem from numerics rather than bad input.
bool is_numeric_failure(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by remap_clock when there are fewer trigger marks than frames need.
class CountMismatchError : public Error {
 public:
  CountMismatchError(std::size_t deficit, const std::string& message)
      : Error(ErrorCode::kCountMismatch, message), deficit_(deficit) {}

  std::size_t deficit() const noexcept { return deficit_; }

 private:
  std::size_t deficit_;
};

}  // namespace loom
