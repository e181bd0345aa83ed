#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace coopscene {

enum class ErrorCode {
  NonPositiveDepth,
  InvalidDistance,
  SingularIntrinsics,
  EmptyCodebook,
  IndexOutOfRange,
  CodebookMismatch,
  CountMismatch,
  LayoutMismatch,
  NonFiniteObjective,
  ShapeMismatch,
  MissingIntrinsics,
  MissingTargets,
  Divergence,
  NoObservations,
  LengthMismatch,
  EmptyDomain,
  PlacementFailure,
  ParseError,
  SchemaVersionMismatch,
  InvalidArgument,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::InvalidDistance: return "InvalidDistance";
    case ErrorCode::SingularIntrinsics: return "SingularIntrinsics";
    case ErrorCode::EmptyCodebook: return "EmptyCodebook";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::CodebookMismatch: return "CodebookMismatch";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::NonFiniteObjective: return "NonFiniteObjective";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingIntrinsics: return "MissingIntrinsics";
    case ErrorCode::MissingTargets: return "MissingTargets";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::NoObservations: return "NoObservations";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyDomain: return "EmptyDomain";
    case ErrorCode::PlacementFailure: return "PlacementFailure";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  // Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

// Carries the index of the object that triggered a nested failure.
class ObjectError : public Error {
 public:
  ObjectError(ErrorCode code, std::size_t object, const std::string& what)
      : Error(code, "object " + std::to_string(object) + ": " + what), object_(object) {}

  std::size_t object() const noexcept { return object_; }

 private:
  std::size_t object_;
};

}  // namespace coopscene
