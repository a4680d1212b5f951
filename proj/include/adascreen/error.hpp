#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace adascreen {

enum class ErrorCode {
  // input files and configuration
  Io,
  SchemaViolation,
  DuplicateItemId,
  EmptyLevels,
  UnknownColumn,
  CodeOutOfRange,
  MissingValue,
  InvalidConfig,
  InvalidArgument,
  // models
  InvalidFactorDim,
  DegenerateMarginal,
  UnknownConditioningVar,
  AcceptanceTooLow,
  SingleClassOutcome,
  NonFiniteLeaf,
  MissingItem,
  // populations and trees
  DrawCountMismatch,
  InvalidCount,
  InsufficientData,
  EmptyData,
  EmptyHoldout,
  UnknownItem,
  // decision theory
  DegenerateTruths,
  EmptyPopulation,
  EmptyGrid,
  InvalidWeight,
};

inline constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Io: return "Io";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::DuplicateItemId: return "DuplicateItemId";
    case ErrorCode::EmptyLevels: return "EmptyLevels";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::CodeOutOfRange: return "CodeOutOfRange";
    case ErrorCode::MissingValue: return "MissingValue";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidFactorDim: return "InvalidFactorDim";
    case ErrorCode::DegenerateMarginal: return "DegenerateMarginal";
    case ErrorCode::UnknownConditioningVar: return "UnknownConditioningVar";
    case ErrorCode::AcceptanceTooLow: return "AcceptanceTooLow";
    case ErrorCode::SingleClassOutcome: return "SingleClassOutcome";
    case ErrorCode::NonFiniteLeaf: return "NonFiniteLeaf";
    case ErrorCode::MissingItem: return "MissingItem";
    case ErrorCode::DrawCountMismatch: return "DrawCountMismatch";
    case ErrorCode::InvalidCount: return "InvalidCount";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::EmptyData: return "EmptyData";
    case ErrorCode::EmptyHoldout: return "EmptyHoldout";
    case ErrorCode::UnknownItem: return "UnknownItem";
    case ErrorCode::DegenerateTruths: return "DegenerateTruths";
    case ErrorCode::EmptyPopulation: return "EmptyPopulation";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::InvalidWeight: return "InvalidWeight";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// True for errors caused by the caller's inputs rather than by a computation.
  bool is_usage() const noexcept {
    switch (code_) {
      case ErrorCode::Io:
      case ErrorCode::SchemaViolation:
      case ErrorCode::DuplicateItemId:
      case ErrorCode::EmptyLevels:
      case ErrorCode::UnknownColumn:
      case ErrorCode::CodeOutOfRange:
      case ErrorCode::MissingValue:
      case ErrorCode::InvalidConfig:
      case ErrorCode::InvalidArgument:
      case ErrorCode::InvalidFactorDim:
      case ErrorCode::UnknownConditioningVar:
      case ErrorCode::InvalidCount:
      case ErrorCode::EmptyHoldout:
      case ErrorCode::UnknownItem:
      case ErrorCode::EmptyGrid:
      case ErrorCode::InvalidWeight:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace adascreen
