#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace evigrid {

enum class ErrorCode {
  kFullConflict,
  kGeometryMismatch,
  kDimensionMismatch,
  kAggregationBudget,
  kInvalidArgument,
  kBadMagic,
  kSizeMismatch,
  kUnsupportedLayer,
  kTopology,
  kUnknownSensor,
  kIo,
  kParse,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-checkable code next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kFullConflict: return "full conflict";
    case ErrorCode::kGeometryMismatch: return "grid geometry mismatch";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kAggregationBudget: return "aggregation error budget exceeded";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kSizeMismatch: return "size mismatch";
    case ErrorCode::kUnsupportedLayer: return "unsupported layer kind";
    case ErrorCode::kTopology: return "topology";
    case ErrorCode::kUnknownSensor: return "unknown sensor";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kParse: return "parse";
  }
  return "unknown";
}

}  // namespace evigrid
