#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace manifold_calib {

enum class ErrorCode {
  kGimbalLock,
  kDimensionMismatch,
  kParseError,
  kValidationError,
  kSamplingFailure,
  kIkDivergence,
  kEmptyManifold,
  kNonFiniteLoss,
  kMissingArtifact,
  kConfigParse,
  kIoError,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; `code()` distinguishes failure kinds.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace manifold_calib
