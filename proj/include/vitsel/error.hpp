#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vitsel {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kIo,
  kBadMagic,
  kUnsupportedVersion,
  kCorruptHeader,
  kTruncated,
  kNonFinite,
  kNumericalFailure,
  kConfig,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kBadMagic: return "bad-magic";
    case ErrorCode::kUnsupportedVersion: return "unsupported-version";
    case ErrorCode::kCorruptHeader: return "corrupt-header";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kNonFinite: return "non-finite";
    case ErrorCode::kNumericalFailure: return "numerical-failure";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

// Every failure raised by the library carries a category so callers (the CLI
// in particular) can map it to a stable exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace vitsel
