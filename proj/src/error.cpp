#include "hydrocast/error.hpp"

namespace hydrocast {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedRow: return "MalformedRow";
    case Errc::CadenceViolation: return "CadenceViolation";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::NoRainChannel: return "NoRainChannel";
    case Errc::DegenerateChannel: return "DegenerateChannel";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::NoEligibleChannel: return "NoEligibleChannel";
    case Errc::RainChannelTargeted: return "RainChannelTargeted";
    case Errc::HorizonTooLarge: return "HorizonTooLarge";
    case Errc::InvalidShape: return "InvalidShape";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::StepOutOfRange: return "StepOutOfRange";
    case Errc::EmptyTarget: return "EmptyTarget";
    case Errc::InvalidRange: return "InvalidRange";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::LevelOutOfRange: return "LevelOutOfRange";
    case Errc::InvertedInterval: return "InvertedInterval";
    case Errc::PoolTooSmall: return "PoolTooSmall";
    case Errc::NoFeasibleLevel: return "NoFeasibleLevel";
    case Errc::KeyMismatch: return "KeyMismatch";
    case Errc::AlreadyConformalized: return "AlreadyConformalized";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::AllZeroTruth: return "AllZeroTruth";
    case Errc::EmptyGroup: return "EmptyGroup";
    case Errc::IoError: return "IoError";
    case Errc::MissingProfile: return "MissingProfile";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace hydrocast
