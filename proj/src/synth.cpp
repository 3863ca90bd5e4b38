#include "hydrocast/synth.hpp"

#include "hydrocast/error.hpp"
#include "hydrocast/rng.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace hydrocast {

std::vector<LevelSensorConfig> GeneratorConfig::default_sensors() {
  std::vector<LevelSensorConfig> sensors;
  const double gains[] = {0.050, 0.060, 0.070, 0.080, 0.090};
  const double bases[] = {0.152, 0.154, 0.155, 0.156, 0.158};
  for (int j = 0; j < 5; ++j) {
    LevelSensorConfig s;
    s.name = "level_" + std::to_string(j + 1);
    s.base = bases[j];
    s.gain = gains[j];
    s.lag = 2 * j;
    // diurnal cycle delayed by the same travel time as the storm response
    s.phase = -2.0 * std::numbers::pi * s.lag / kDefaultWindowLength;
    sensors.push_back(s);
  }
  return sensors;
}

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(Errc::InvalidConfig, why); };
  if (sensors.size() != 5) fail("generator needs exactly 5 level sensors");
  if (window_length < 1 || windows < 0 || warmup_steps < 0) fail("window_length/windows/warmup_steps out of range");
  if (!(storm_rate >= 0.0) || !(storm_rate < 1.0)) fail("storm_rate must lie in [0, 1)");
  if (storm_min_steps < 1 || storm_max_steps < storm_min_steps) fail("storm duration range is empty");
  if (!(storm_shape > 1.0)) fail("storm_shape must exceed 1");
  if (!(peak_intensity_shape > 0.0) || !(peak_intensity_scale > 0.0)) fail("peak intensity law must be positive");
  if (!(std::abs(ar_coefficient) < 1.0) || !(noise_std >= 0.0)) fail("noise parameters out of range");
  int previous_lag = 0;
  for (const auto& s : sensors) {
    if (s.name.empty() || s.name == rain_name) fail("sensor names must be non-empty and differ from the rain channel");
    if (!(s.decay > 0.0) || s.lag < 0 || s.lag < previous_lag) fail("sensor '" + s.name + "': bad decay or lag");
    previous_lag = s.lag;
  }
  validate_schema(schema());
}

std::vector<ChannelMeta> GeneratorConfig::schema() const {
  std::vector<ChannelMeta> out;
  for (const auto& s : sensors) out.push_back({s.name, ChannelKind::Level, "m"});
  out.push_back({rain_name, ChannelKind::Rain, "mm/h"});
  return out;
}

TimeSeriesWindow synth_series(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const int J = static_cast<int>(config.sensors.size());
  const int max_lag = config.sensors.back().lag;
  const int warmup = config.warmup_steps + max_lag;
  const int steps = config.windows * config.window_length;
  const int total = warmup + steps;

  // Rain: superposed storms with Poisson arrivals.
  std::vector<double> rain(static_cast<std::size_t>(total) + config.storm_max_steps, 0.0);
  std::poisson_distribution<int> arrivals(config.storm_rate);
  std::gamma_distribution<double> peak_law(config.peak_intensity_shape, config.peak_intensity_scale);
  const double k1 = config.storm_shape - 1.0;
  for (int t = 0; t < total; ++t) {
    for (int n = arrivals(rng.engine()); n > 0; --n) {
      const int duration = rng.uniform_int(config.storm_min_steps, config.storm_max_steps);
      const double peak = peak_law(rng.engine());
      for (int s = 0; s < duration; ++s) {
        // gamma-density shape with its mode at one third of the storm
        const double x = 3.0 * k1 * (s + 0.5) / duration;
        rain[t + s] += peak * std::pow(x / k1, k1) * std::exp(k1 - x);
      }
    }
  }

  TimeSeriesWindow out;
  out.channels = config.schema();
  out.start_time = config.start_time;
  out.values = Eigen::MatrixXd::Zero(J + 1, steps);
  out.observed = BoolArray::Constant(J + 1, steps, true);

  const double innovation = config.noise_std * std::sqrt(1.0 - config.ar_coefficient * config.ar_coefficient);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int j = 0; j < J; ++j) {
    const auto& s = config.sensors[j];
    const double keep = std::exp(-1.0 / s.decay);
    double filtered = 0.0;
    double noise = 0.0;
    std::vector<double> response(total, 0.0);
    for (int t = 0; t < total; ++t) {
      filtered = keep * filtered + (1.0 - keep) * rain[t];
      response[t] = filtered;
    }
    for (int t = 0; t < total; ++t) {
      noise = config.ar_coefficient * noise + innovation * rng.normal();
      if (t < warmup) continue;
      const int step = t - warmup;
      const double lagged = t - s.lag >= 0 ? response[t - s.lag] : 0.0;
      // `step` counts from start_time, so the diurnal phase is tied to the clock
      out.values(j, step) = s.base + s.amplitude * std::sin(two_pi * step / config.window_length + s.phase) +
                            s.gain * lagged + noise;
    }
  }
  for (int step = 0; step < steps; ++step) out.values(J, step) = rain[warmup + step];
  return out;
}

std::vector<TimeSeriesWindow> synth_generate(const GeneratorConfig& config, std::uint64_t seed) {
  return make_windows(synth_series(config, seed), config.window_length, config.window_length);
}

void to_json(nlohmann::json& j, const LevelSensorConfig& c) {
  j = nlohmann::json{{"name", c.name},   {"base", c.base},   {"amplitude", c.amplitude}, {"phase", c.phase},
                     {"gain", c.gain},   {"decay", c.decay}, {"lag", c.lag}};
}

void from_json(const nlohmann::json& j, LevelSensorConfig& c) {
  LevelSensorConfig d;
  c.name = j.at("name").get<std::string>();
  c.base = j.value("base", d.base);
  c.amplitude = j.value("amplitude", d.amplitude);
  c.phase = j.value("phase", d.phase);
  c.gain = j.value("gain", d.gain);
  c.decay = j.value("decay", d.decay);
  c.lag = j.value("lag", d.lag);
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = nlohmann::json{{"window_length", c.window_length},
                     {"windows", c.windows},
                     {"start_time", c.start_time},
                     {"warmup_steps", c.warmup_steps},
                     {"storm_rate", c.storm_rate},
                     {"storm_min_steps", c.storm_min_steps},
                     {"storm_max_steps", c.storm_max_steps},
                     {"storm_shape", c.storm_shape},
                     {"peak_intensity_shape", c.peak_intensity_shape},
                     {"peak_intensity_scale", c.peak_intensity_scale},
                     {"ar_coefficient", c.ar_coefficient},
                     {"noise_std", c.noise_std},
                     {"rain_name", c.rain_name},
                     {"sensors", c.sensors}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  const GeneratorConfig d;
  c.window_length = j.value("window_length", d.window_length);
  c.windows = j.value("windows", d.windows);
  c.start_time = j.value("start_time", d.start_time);
  c.warmup_steps = j.value("warmup_steps", d.warmup_steps);
  c.storm_rate = j.value("storm_rate", d.storm_rate);
  c.storm_min_steps = j.value("storm_min_steps", d.storm_min_steps);
  c.storm_max_steps = j.value("storm_max_steps", d.storm_max_steps);
  c.storm_shape = j.value("storm_shape", d.storm_shape);
  c.peak_intensity_shape = j.value("peak_intensity_shape", d.peak_intensity_shape);
  c.peak_intensity_scale = j.value("peak_intensity_scale", d.peak_intensity_scale);
  c.ar_coefficient = j.value("ar_coefficient", d.ar_coefficient);
  c.noise_std = j.value("noise_std", d.noise_std);
  c.rain_name = j.value("rain_name", d.rain_name);
  c.sensors = j.contains("sensors") ? j.at("sensors").get<std::vector<LevelSensorConfig>>() : d.sensors;
}

}  // namespace hydrocast
