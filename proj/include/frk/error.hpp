#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace frk {

enum class ErrorCode {
  InvalidInput,
  DegenerateCamera,
  PointAtInfinity,
  InsufficientViews,
  DegenerateGeometry,
  InsufficientPoints,
  DegenerateConfiguration,
  NoSolution,
  Format,
  UnsupportedConfiguration,
  TooSmall,
  IncompatibleGrids,
  EmptySurface,
  EmptySummary,
  NotFound,
  Io,
  HashMismatch,
};

std::string_view to_string(ErrorCode code);

/// Library-wide exception. `field` names the offending input when one can be
/// singled out (file-format fields, request parameters).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string field = {})
      : std::runtime_error(message), code_(code), field_(std::move(field)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorCode code_;
  std::string field_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "invalid-input";
    case ErrorCode::DegenerateCamera: return "degenerate-camera";
    case ErrorCode::PointAtInfinity: return "point-at-infinity";
    case ErrorCode::InsufficientViews: return "insufficient-views";
    case ErrorCode::DegenerateGeometry: return "degenerate-geometry";
    case ErrorCode::InsufficientPoints: return "insufficient-points";
    case ErrorCode::DegenerateConfiguration: return "degenerate-configuration";
    case ErrorCode::NoSolution: return "no-solution";
    case ErrorCode::Format: return "format";
    case ErrorCode::UnsupportedConfiguration: return "unsupported-configuration";
    case ErrorCode::TooSmall: return "too-small";
    case ErrorCode::IncompatibleGrids: return "incompatible-grids";
    case ErrorCode::EmptySurface: return "empty-surface";
    case ErrorCode::EmptySummary: return "empty-summary";
    case ErrorCode::NotFound: return "not-found";
    case ErrorCode::Io: return "io";
    case ErrorCode::HashMismatch: return "hash-mismatch";
  }
  return "unknown";
}

}  // namespace frk
