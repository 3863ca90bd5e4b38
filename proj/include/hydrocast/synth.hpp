#pragma once

#include "hydrocast/series.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace hydrocast {

/// One level sensor of the synthetic network. Sensors are listed upstream to
/// downstream; `lag` (steps) must not decrease along the list.
struct LevelSensorConfig {
  std::string name;
  double base = 0.155;       // m
  double amplitude = 0.026;  // diurnal amplitude, m
  double phase = 0.0;        // radians
  double gain = 0.1;         // m per mm/h of filtered rain
  double decay = 10.0;       // exponential kernel time constant, steps
  int lag = 0;               // steps
};

/// Parameters of the synthetic sewer generator. Defaults mirror the scale of
/// a dry-weather urban sewer (levels around 0.155 m) with a roughly 10:1
/// dry:wet split of 24-hour windows.
struct GeneratorConfig {
  int window_length = kDefaultWindowLength;
  int windows = 600;
  std::int64_t start_time = 1577836800;  // 2020-01-01T00:00:00Z
  int warmup_steps = 480;

  double storm_rate = 3.7e-4;  // Poisson arrivals per step
  int storm_min_steps = 5;
  int storm_max_steps = 30;
  double storm_shape = 3.0;          // gamma shape of the within-storm intensity profile
  double peak_intensity_shape = 2.0;  // gamma law of a storm's peak intensity (mm/h)
  double peak_intensity_scale = 4.0;

  double ar_coefficient = 0.9;
  double noise_std = 0.008;  // stationary std of the AR(1) noise, m

  std::string rain_name = "rain";
  std::vector<LevelSensorConfig> sensors = default_sensors();

  static std::vector<LevelSensorConfig> default_sensors();

  /// Throws InvalidConfig.
  void validate() const;
  std::vector<ChannelMeta> schema() const;
};

/// One contiguous recording of `windows * window_length` steps; the rain
/// channel is last. Identical (config, seed) give identical output.
TimeSeriesWindow synth_series(const GeneratorConfig& config, std::uint64_t seed);

/// synth_series() cut into consecutive non-overlapping windows.
std::vector<TimeSeriesWindow> synth_generate(const GeneratorConfig& config, std::uint64_t seed);

void to_json(nlohmann::json& j, const LevelSensorConfig& c);
void from_json(const nlohmann::json& j, LevelSensorConfig& c);
void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);

}  // namespace hydrocast
