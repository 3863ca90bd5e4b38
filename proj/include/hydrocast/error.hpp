#pragma once

#include <stdexcept>
#include <string>

namespace hydrocast {

/// Failure categories raised by the library. The CLI maps them onto exit codes.
enum class Errc {
  MalformedRow,
  CadenceViolation,
  SchemaMismatch,
  NoRainChannel,
  DegenerateChannel,
  InvalidConfig,
  NoEligibleChannel,
  RainChannelTargeted,
  HorizonTooLarge,
  InvalidShape,
  ShapeMismatch,
  StepOutOfRange,
  EmptyTarget,
  InvalidRange,
  EmptyInput,
  LevelOutOfRange,
  InvertedInterval,
  PoolTooSmall,
  NoFeasibleLevel,
  KeyMismatch,
  AlreadyConformalized,
  LengthMismatch,
  AllZeroTruth,
  EmptyGroup,
  IoError,
  MissingProfile,
};

const char* to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace hydrocast
