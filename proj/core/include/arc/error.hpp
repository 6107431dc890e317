#pragma once

#include <stdexcept>
#include <string>

namespace arc {

enum class ErrorCode {
  // grid
  EmptyGrid,
  RaggedRows,
  ColorOutOfRange,
  OversizeGrid,
  ShapeMismatch,
  // serializer
  BadHeader,
  RowLengthMismatch,
  RowCountMismatch,
  UnexpectedToken,
  TrailingTokens,
  Truncated,
  InconsistentBounds,
  ContextOverflow,
  // model
  InvalidConfig,
  ContextExceeded,
  UnknownToken,
  EmptyMask,
  NonFiniteGradient,
  NoTrainableEpisodes,
  CorruptCheckpoint,
  VersionMismatch,
  // adapters
  UnknownTarget,
  EmptyTTTSet,
  // ensemble
  NoCandidates,
  AllViewsSkipped,
  // harness
  ParseError,
  SchemaError,
  GridValidationError,
  MissingSolution,
  NoStrategies,
  IoError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace arc
