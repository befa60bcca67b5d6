#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gibbsgof {

enum class ErrorKind {
  InvalidGrid,
  InvalidMark,
  InvalidParameter,
  InvalidConfiguration,
  InsufficientGuard,
  Numeric,
  FitFailure,
  DegenerateNormalization,
  Unsupported,
  CalibrationFailure,
  Config,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidGrid: return "invalid-grid";
    case ErrorKind::InvalidMark: return "invalid-mark";
    case ErrorKind::InvalidParameter: return "invalid-parameter";
    case ErrorKind::InvalidConfiguration: return "invalid-configuration";
    case ErrorKind::InsufficientGuard: return "insufficient-guard";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::FitFailure: return "fit-failure";
    case ErrorKind::DegenerateNormalization: return "degenerate-normalization";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::CalibrationFailure: return "calibration-failure";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace gibbsgof
