#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sc2ba {

enum class ErrorCode {
  NotAnAttacker,
  CommandForDeadUnit,
  MalformedTarget,
  TargetDead,
  InvalidHealTarget,
  ArenaTooSmall,
  UnknownUnitName,
  NonPositiveCount,
  UnknownBaseScenario,
  UnknownConfigKey,
  ConfigSyntax,
  UnavailableAction,
  EpisodeAlreadyTerminated,
  ShapeMismatch,
  NoAvailableAction,
  MutablePoolMember,
  EmptyRecipe,
  MisalignedRuns,
  DegenerateData,
  NoInputFiles,
  CheckpointFormat,
  CheckpointScenarioMismatch,
  HandshakeVersionMismatch,
  TeamSlotTaken,
  MalformedMessage,
  ActTimeout,
  ConnectionLost,
  ProtocolViolation,
  Io,
};

std::string_view error_code_name(ErrorCode code);

// All recoverable failures surface as this exception; `code()` is stable and
// is what the wire protocol and CLI report.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sc2ba
