#include "ep2t/error.hpp"

namespace ep2t {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InsufficientEvents: return "InsufficientEvents";
    case ErrorCode::InvalidInterval: return "InvalidInterval";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::NonPositiveIntensity: return "NonPositiveIntensity";
    case ErrorCode::ZeroDim: return "ZeroDim";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::InconsistentTable: return "InconsistentTable";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::UnsupportedOp: return "UnsupportedOp";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::InvalidDepths: return "InvalidDepths";
    case ErrorCode::NotARotation: return "NotARotation";
    case ErrorCode::KeyMismatch: return "KeyMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace ep2t
