#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace elicit {

enum class ErrorCode {
  InvalidArgument,
  UnknownNode,
  KindMismatch,
  DuplicateNode,
  UnknownDecision,
  SequenceGap,
  ParseError,
  SchemaVersionMismatch,
  InvariantViolation,
  SameKey,
  EmptyAfterCanonicalization,
  AnnotatorFailure,
  ProviderFailure,
  Timeout,
  SchemaViolation,
  StaleQuestion,
  OptionOutOfRange,
  InvalidAnswer,
  StageViolation,
  BudgetExhausted,
  InvalidEdit,
  UnknownSession,
  CorruptLog,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by provider backends. Keeps the raw model payload for diagnostics.
class ProviderError : public Error {
 public:
  ProviderError(ErrorCode code, const std::string& message, std::string raw_payload = {})
      : Error(code, message), raw_payload_(std::move(raw_payload)) {}

  const std::string& raw_payload() const noexcept { return raw_payload_; }

 private:
  std::string raw_payload_;
};

}  // namespace elicit
