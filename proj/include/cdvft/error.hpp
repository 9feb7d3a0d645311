#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cdvft {

enum class ErrorKind {
  kInvalidInput,
  kShape,
  kNumericalCorruption,
  kConfig,
  kInvalidTape,
  kTrainingDiverged,
  kIo,
  kBadMagic,
  kUnsupportedVersion,
  kPayloadLength,
  kNonFiniteParameter,
  kUsage,
};

/// Stable machine-readable name, used in CLI error records.
constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid_input";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kNumericalCorruption: return "numerical_corruption";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kInvalidTape: return "invalid_tape";
    case ErrorKind::kTrainingDiverged: return "training_diverged";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kBadMagic: return "bad_magic";
    case ErrorKind::kUnsupportedVersion: return "unsupported_version";
    case ErrorKind::kPayloadLength: return "payload_length";
    case ErrorKind::kNonFiniteParameter: return "non_finite_parameter";
    case ErrorKind::kUsage: return "usage";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require_same_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    fail(ErrorKind::kShape, std::string(what) + ": expected length " + std::to_string(want) +
                                ", got " + std::to_string(got));
  }
}

}  // namespace detail
}  // namespace cdvft
