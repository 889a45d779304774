#pragma once

#include <stdexcept>
#include <string>

namespace tailpass {

enum class ErrorCode {
  DimensionMismatch,
  OverflowLatency,
  KTooSmall,
  InvalidParams,
  InvalidDistribution,
  NonPositiveG,
  NonPositiveWeight,
  IndexOutOfRange,
  DeltaOutOfRange,
  InvalidMargin,
  OnBreakpoint,
  MaxRoundsExceeded,
  InvalidArgument,
  Config,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::OverflowLatency: return "OverflowLatency";
    case ErrorCode::KTooSmall: return "KTooSmall";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::NonPositiveG: return "NonPositiveG";
    case ErrorCode::NonPositiveWeight: return "NonPositiveWeight";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::DeltaOutOfRange: return "DeltaOutOfRange";
    case ErrorCode::InvalidMargin: return "InvalidMargin";
    case ErrorCode::OnBreakpoint: return "OnBreakpoint";
    case ErrorCode::MaxRoundsExceeded: return "MaxRoundsExceeded";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

/// Library error. Every failure mode carries an ErrorCode so callers (the CLI
/// in particular) can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Configuration problems found while reading a scenario; `path` is the
/// JSON-pointer-like location of the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(ErrorCode::Config, path + ": " + what), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

}  // namespace tailpass
