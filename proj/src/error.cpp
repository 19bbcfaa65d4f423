#include "sc2ba/error.hpp"

namespace sc2ba {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotAnAttacker: return "NotAnAttacker";
    case ErrorCode::CommandForDeadUnit: return "CommandForDeadUnit";
    case ErrorCode::MalformedTarget: return "MalformedTarget";
    case ErrorCode::TargetDead: return "TargetDead";
    case ErrorCode::InvalidHealTarget: return "InvalidHealTarget";
    case ErrorCode::ArenaTooSmall: return "ArenaTooSmall";
    case ErrorCode::UnknownUnitName: return "UnknownUnitName";
    case ErrorCode::NonPositiveCount: return "NonPositiveCount";
    case ErrorCode::UnknownBaseScenario: return "UnknownBaseScenario";
    case ErrorCode::UnknownConfigKey: return "UnknownConfigKey";
    case ErrorCode::ConfigSyntax: return "ConfigSyntax";
    case ErrorCode::UnavailableAction: return "UnavailableAction";
    case ErrorCode::EpisodeAlreadyTerminated: return "EpisodeAlreadyTerminated";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NoAvailableAction: return "NoAvailableAction";
    case ErrorCode::MutablePoolMember: return "MutablePoolMember";
    case ErrorCode::EmptyRecipe: return "EmptyRecipe";
    case ErrorCode::MisalignedRuns: return "MisalignedRuns";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::NoInputFiles: return "NoInputFiles";
    case ErrorCode::CheckpointFormat: return "CheckpointFormat";
    case ErrorCode::CheckpointScenarioMismatch: return "CheckpointScenarioMismatch";
    case ErrorCode::HandshakeVersionMismatch: return "HandshakeVersionMismatch";
    case ErrorCode::TeamSlotTaken: return "TeamSlotTaken";
    case ErrorCode::MalformedMessage: return "MalformedMessage";
    case ErrorCode::ActTimeout: return "ActTimeout";
    case ErrorCode::ConnectionLost: return "ConnectionLost";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace sc2ba
