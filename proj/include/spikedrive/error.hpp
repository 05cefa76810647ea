#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spikedrive {

enum class ErrorCode {
  DegenerateRange,
  OutOfRange,
  NotPowerOfTwo,
  DimMismatch,
  EmptySubset,
  EmptyInput,
  CountOutOfRange,
  ShapeMismatch,
  IntegerOverflow,
  WrongMode,
  NotCalibrated,
  MissingRate,
  InvalidArgument,
  ParseError,
  ConfigError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DegenerateRange: return "DegenerateRange";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::NotPowerOfTwo: return "NotPowerOfTwo";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::EmptySubset: return "EmptySubset";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::CountOutOfRange: return "CountOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::IntegerOverflow: return "IntegerOverflow";
    case ErrorCode::WrongMode: return "WrongMode";
    case ErrorCode::NotCalibrated: return "NotCalibrated";
    case ErrorCode::MissingRate: return "MissingRate";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure in the library surfaces as this exception; `code()` names the contract that broke.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace spikedrive
