#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bpa {

enum class ErrorCode {
  // contracts
  InvalidUtterance,
  WiringError,
  RoleError,
  SkillFailure,
  Serialization,
  // orchestrator
  EmptyRegistry,
  NoEligibleAgent,
  UnknownTurn,
  InvalidConfig,
  // nlq
  UnparseableUtterance,
  UnknownColumn,
  InvalidQuery,
  // datastore
  BindError,
  EmptyAggregation,
  SchemaViolation,
  UnknownTable,
  UnknownRow,
  DuplicateTable,
  SeqTooOld,
  JournalCorrupt,
  FixtureError,
  // process engine
  ValidationError,
  IllegalTransition,
  UnauthorizedActor,
  TerminalState,
  UnknownApplication,
  // alerts
  UnknownTrigger,
  DeliveryFailure,
  // gateway
  UnknownSession,
  EmptyUtterance,
  UnknownToken,
  DuplicateFeedback,
  HealthProbeFailed,
  DuplicateName,
  ProtocolError,
  // transcripts
  MalformedTranscript,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (agents, the gateway, tests) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace bpa
