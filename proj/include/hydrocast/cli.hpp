#pragma once

#include "hydrocast/band.hpp"
#include "hydrocast/conformal.hpp"
#include "hydrocast/denoiser.hpp"
#include "hydrocast/diffusion.hpp"
#include "hydrocast/error.hpp"
#include "hydrocast/evaluation.hpp"
#include "hydrocast/masking.hpp"
#include "hydrocast/normalize.hpp"
#include "hydrocast/synth.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hydrocast {

struct SplitFractions {
  double train = 0.6;
  double calibration = 0.2;
  double test = 0.2;
};

/// Everything a run depends on besides its input files.
struct RunConfig {
  std::uint64_t seed = 7;
  std::filesystem::path output_dir = "run";

  // data
  std::filesystem::path csv;          // empty: <output_dir>/data/series.csv written by `synth`
  std::vector<ChannelMeta> channels;  // empty: the generator's schema
  GeneratorConfig generator;
  int window_length = kDefaultWindowLength;
  int train_stride = 24;
  int calibration_stride = kDefaultWindowLength;
  int test_stride = kDefaultWindowLength;
  SplitFractions splits;

  // model and training
  int diffusion_steps = 50;
  double beta_min = 1e-4;
  double beta_max = 0.5;
  int width = 64;
  int blocks = 2;
  int heads = 1;
  MaskSpec mask;
  int epochs = 20;
  int batch_size = 16;
  double learning_rate = 1e-3;

  // inference and calibration
  int samples = 100;
  int threads = 1;
  double alpha = 0.9;
  int horizon = 40;
  std::vector<std::string> sensors{"level_1"};
  double rain_threshold = kDefaultRainThreshold;
  int plots = 2;        // SVGs per report row
  int max_windows = 0;  // 0: every test window

  std::vector<ChannelMeta> schema() const;
  std::filesystem::path data_path() const;
  std::filesystem::path model_dir() const { return output_dir / "model"; }
  std::filesystem::path profile_dir() const { return output_dir / "profiles"; }

  /// Throws InvalidConfig.
  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing fields keep their defaults; unknown fields throw InvalidConfig.
void from_json(const nlohmann::json& j, RunConfig& c);

/// Applies `path.to.field=value`; the value is parsed as JSON when it can be,
/// otherwise taken as a string. Throws InvalidConfig.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Defaults, then the file (if any), then overrides, then the seed/out flags.
RunConfig load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides,
                      std::optional<std::uint64_t> seed, const std::optional<std::filesystem::path>& out);

enum class Split { Train, Calibration, Test };

/// Stable split of a base window from its start time alone.
Split assign_split(std::int64_t start_time, const SplitFractions& fractions, std::uint64_t seed);

/// A recording cut into non-overlapping base windows, each assigned a split.
struct Dataset {
  TimeSeriesWindow series;
  int window_length = kDefaultWindowLength;
  std::vector<Split> assignment;

  int base_count() const { return static_cast<int>(assignment.size()); }
  TimeSeriesWindow base_window(int index) const;
  /// Windows every `stride` steps inside maximal runs of consecutive base
  /// windows of `split`; none straddles a split boundary.
  std::vector<TimeSeriesWindow> windows(Split split, int stride) const;
};

Dataset load_dataset(const RunConfig& config);

/// Trained network plus what is needed to use it.
struct Model {
  DenoiserParams<float> params;
  NormalizationStats stats;
  NoiseSchedule schedule;
};

Model load_model(const RunConfig& config);

/// N imputations of the final `horizon` steps of one sensor, physical units.
ImputationSamples forecast_samples(const Model& model, const TimeSeriesWindow& window, int channel,
                                   const RunConfig& config);
/// The same samples summarized as a raw band.
IntervalBand forecast_band(const Model& model, const TimeSeriesWindow& window, int channel, const RunConfig& config);

/// Truth of the final `horizon` steps, or nothing when a reading is missing.
std::optional<std::vector<double>> horizon_truth(const TimeSeriesWindow& window, int channel, int horizon);

struct PredictRequest {
  int window_index = 0;
  std::string sensor;  // empty: first configured sensor
  int horizon = 0;     // 0: configured horizon
  std::filesystem::path output;  // empty: <out>/predictions/...
  std::filesystem::path svg;     // empty: no plot
  std::filesystem::path samples_csv;  // empty: samples are not kept
};

void cmd_synth(const RunConfig& config);
void cmd_train(const RunConfig& config, bool resume = false);
void cmd_calibrate(const RunConfig& config);
nlohmann::json cmd_predict(const RunConfig& config, const PredictRequest& request);
EvaluationReport cmd_evaluate(const RunConfig& config);

/// Exit status for a library error: 1 usage/config, 2 data, 3 missing artifact.
int exit_code(Errc code);

int run_cli(int argc, char** argv);

}  // namespace hydrocast
