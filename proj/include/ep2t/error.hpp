#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ep2t {

enum class ErrorCode {
  InsufficientEvents,
  InvalidInterval,
  EmptyWindow,
  NonPositiveIntensity,
  ZeroDim,
  TooFewPoints,
  EmptyCloud,
  InconsistentTable,
  ShapeMismatch,
  UnsupportedOp,
  DimMismatch,
  InvalidDepths,
  NotARotation,
  KeyMismatch,
  ParseError,
  IoError,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// that callers (and the CLI exit-code mapping) can branch on kind.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  /// Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace ep2t
