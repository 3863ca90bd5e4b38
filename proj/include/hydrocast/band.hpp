#pragma once

#include "hydrocast/diffusion.hpp"
#include "hydrocast/series.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

namespace hydrocast {

struct BandStep {
  int step = 0;  // 1-based position within the horizon
  double lo = 0.0;
  double hi = 0.0;
  double median = 0.0;

  bool operator==(const BandStep&) const = default;
};

/// Per-step interval in physical units, before or after conformalization.
struct IntervalBand {
  std::string sensor;
  Condition condition = Condition::Dry;
  int horizon = 0;
  double alpha = 0.9;  // nominal confidence; q_hi - q_lo
  double q_lo = 0.05;
  double q_hi = 0.95;
  bool conformalized = false;
  std::vector<BandStep> steps;

  double mean_width() const;
  bool operator==(const IntervalBand&) const = default;
};

/// Linear interpolation between order statistics at index q * (N - 1).
/// Throws EmptyInput, LevelOutOfRange.
double empirical_quantile(std::span<const double> values, double q);

/// Symmetric (1 - alpha)/2 and (1 + alpha)/2 quantiles plus the median at
/// every target position, across the N samples.
/// Throws EmptyInput (N < 2), LevelOutOfRange.
IntervalBand band_from_samples(const ImputationSamples& samples, double alpha, Condition condition);

void to_json(nlohmann::json& j, const IntervalBand& band);
void from_json(const nlohmann::json& j, IntervalBand& band);

}  // namespace hydrocast
