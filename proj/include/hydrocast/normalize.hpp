#pragma once

#include "hydrocast/series.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

namespace hydrocast {

/// Per-channel z-score statistics. The rain channel is passed through
/// log(1 + x) before standardization when rain_log_transform is set.
struct NormalizationStats {
  std::vector<std::string> channel_names;
  std::vector<double> mean;
  std::vector<double> stddev;
  bool rain_log_transform = true;
  int rain_channel = -1;

  /// Forward map for a single reading of channel k.
  double apply(int k, double value) const;
  double invert(int k, double z) const;
};

/// Population statistics over observed entries only. Throws EmptyInput,
/// DegenerateChannel (fewer than two observations or zero spread).
NormalizationStats fit_normalizer(std::span<const TimeSeriesWindow> windows, bool rain_log_transform = true);

/// Unobserved entries are set to the sentinel 0 in both directions.
TimeSeriesWindow normalize(const TimeSeriesWindow& window, const NormalizationStats& stats);
TimeSeriesWindow denormalize(const TimeSeriesWindow& window, const NormalizationStats& stats);

void to_json(nlohmann::json& j, const NormalizationStats& stats);
void from_json(const nlohmann::json& j, NormalizationStats& stats);

}  // namespace hydrocast
