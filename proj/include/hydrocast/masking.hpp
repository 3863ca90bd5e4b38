#pragma once

#include "hydrocast/rng.hpp"
#include "hydrocast/series.hpp"

#include <nlohmann/json.hpp>

#include <vector>

namespace hydrocast {

struct TargetPosition {
  int channel = 0;
  int step = 0;

  bool operator==(const TargetPosition&) const = default;
};

/// Positions to impute (true) in a K x L window.
struct Mask {
  BoolArray target;

  Mask() = default;
  Mask(int channels, int length) : target(BoolArray::Constant(channels, length, false)) {}

  int count() const { return static_cast<int>(target.count()); }
  bool empty() const { return count() == 0; }

  /// Channel-major, time-ascending order. Every target vector in the library
  /// (noisy values, predicted noise, samples) follows this order.
  std::vector<TargetPosition> positions() const;
};

struct MaskSpec {
  int min_horizon = 1;
  int max_horizon = 40;
  int max_channels = -1;  // -1: every non-rain channel

  /// Throws InvalidConfig unless 1 <= min <= max <= length and 1 <= max_channels < channels.
  void validate(int channels, int length) const;
  int channel_cap(int channels) const { return max_channels < 0 ? channels - 1 : max_channels; }
};

/// Hides the final h observed readings of 1..max_channels randomly chosen
/// non-rain channels, with h drawn independently per channel. Unobserved
/// positions inside the suffix are never targets. Throws NoEligibleChannel.
Mask training_mask(const TimeSeriesWindow& window, const MaskSpec& spec, Rng& rng);

/// Marks the last `horizon` steps of each listed channel whether or not they
/// were observed. Throws RainChannelTargeted, HorizonTooLarge.
Mask forecast_mask(const TimeSeriesWindow& window, const std::vector<int>& channels, int horizon);

/// Debug dump: [[channel, start, end], ...] with `end` exclusive, one triple per contiguous run.
nlohmann::json mask_to_json(const Mask& mask);

}  // namespace hydrocast
