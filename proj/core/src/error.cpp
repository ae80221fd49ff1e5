#include "manifold_calib/error.hpp"

namespace manifold_calib {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kGimbalLock: return "GimbalLock";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kValidationError: return "ValidationError";
    case ErrorCode::kSamplingFailure: return "SamplingFailure";
    case ErrorCode::kIkDivergence: return "IkDivergence";
    case ErrorCode::kEmptyManifold: return "EmptyManifold";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kMissingArtifact: return "MissingArtifact";
    case ErrorCode::kConfigParse: return "ConfigParse";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace manifold_calib
