#include "hydrocast/cli.hpp"

#include "hydrocast/csv.hpp"
#include "hydrocast/error.hpp"
#include "hydrocast/rng.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace hydrocast {

namespace {

// Independent seed streams derived from the master seed.
constexpr std::uint64_t kSynthStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kTrainStream = 3;
constexpr std::uint64_t kSampleStream = 4;
constexpr std::uint64_t kCalibrationStream = 5;
constexpr std::uint64_t kSplitStream = 6;

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::IoError, path.string() + " is not valid JSON");
  return j;
}

std::string fnv1a_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
  return hex;
}

Architecture architecture_of(const RunConfig& c) {
  return {static_cast<int>(c.schema().size()), c.width, c.blocks, c.heads, c.diffusion_steps};
}

std::uint64_t sample_seed(const RunConfig& c, const TimeSeriesWindow& window, int channel) {
  const auto stream = static_cast<std::uint64_t>(window.start_time) * 64 + static_cast<std::uint64_t>(channel);
  return derive_seed(derive_seed(c.seed, kSampleStream), stream);
}

std::vector<TimeSeriesWindow> cap(std::vector<TimeSeriesWindow> windows, int max_windows) {
  if (max_windows > 0 && windows.size() > static_cast<std::size_t>(max_windows)) windows.resize(max_windows);
  return windows;
}

}  // namespace

// ---------------------------------------------------------------------------
// Data

Split assign_split(std::int64_t start_time, const SplitFractions& fractions, std::uint64_t seed) {
  const auto h = mix64(static_cast<std::uint64_t>(start_time) ^ derive_seed(seed, kSplitStream));
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  if (u < fractions.train) return Split::Train;
  if (u < fractions.train + fractions.calibration) return Split::Calibration;
  return Split::Test;
}

TimeSeriesWindow Dataset::base_window(int index) const {
  if (index < 0 || index >= base_count()) {
    throw Error(Errc::InvalidRange, "window index " + std::to_string(index) + " outside [0, " +
                                        std::to_string(base_count()) + ")");
  }
  return series.slice(index * window_length, window_length);
}

std::vector<TimeSeriesWindow> Dataset::windows(Split split, int stride) const {
  std::vector<TimeSeriesWindow> out;
  int i = 0;
  while (i < base_count()) {
    if (assignment[i] != split) {
      ++i;
      continue;
    }
    int j = i;
    while (j < base_count() && assignment[j] == split) ++j;
    const auto run = series.slice(i * window_length, (j - i) * window_length);
    for (auto& w : make_windows(run, window_length, stride)) out.push_back(std::move(w));
    i = j;
  }
  return out;
}

Dataset load_dataset(const RunConfig& config) {
  const auto path = config.data_path();
  if (!std::filesystem::exists(path)) {
    throw Error(Errc::IoError, "no dataset at " + path.string() + " (run `synth` or set data.csv)");
  }
  Dataset d;
  d.series = load_series(path, config.schema());
  d.window_length = config.window_length;
  const int count = d.series.length() / config.window_length;
  if (count == 0) throw Error(Errc::EmptyInput, "recording is shorter than one window");
  for (int i = 0; i < count; ++i) {
    const auto start = d.series.start_time + static_cast<std::int64_t>(i) * config.window_length * kCadenceSeconds;
    d.assignment.push_back(assign_split(start, config.splits, config.seed));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Model use

Model load_model(const RunConfig& config) {
  const auto dir = config.model_dir();
  Model m{load_params<float>(dir / "weights.json"),
          read_json(dir / "normalization.json").get<NormalizationStats>(),
          build_schedule(config.diffusion_steps, config.beta_min, config.beta_max)};
  if (!(m.params.arch == architecture_of(config))) {
    throw Error(Errc::InvalidConfig, "saved weights do not match the configured architecture");
  }
  return m;
}

ImputationSamples forecast_samples(const Model& model, const TimeSeriesWindow& window, int channel,
                                   const RunConfig& config) {
  const auto normalized = normalize(window, model.stats);
  const auto mask = forecast_mask(normalized, {channel}, config.horizon);
  return sample_n(model.params, normalized, mask, model.schedule, config.samples, sample_seed(config, window, channel),
                  model.stats, config.threads);
}

IntervalBand forecast_band(const Model& model, const TimeSeriesWindow& window, int channel, const RunConfig& config) {
  return band_from_samples(forecast_samples(model, window, channel, config), config.alpha,
                           classify_condition(window, config.rain_threshold));
}

std::optional<std::vector<double>> horizon_truth(const TimeSeriesWindow& window, int channel, int horizon) {
  std::vector<double> truth;
  for (int l = window.length() - horizon; l < window.length(); ++l) {
    if (!window.observed(channel, l)) return std::nullopt;
    truth.push_back(window.values(channel, l));
  }
  return truth;
}

// ---------------------------------------------------------------------------
// Commands

void cmd_synth(const RunConfig& config) {
  const auto series = synth_series(config.generator, derive_seed(config.seed, kSynthStream));
  const auto path = config.output_dir / "data" / "series.csv";
  std::filesystem::create_directories(path.parent_path());
  write_csv(path, series);
  nlohmann::json channels = nlohmann::json::array();
  for (const auto& c : series.channels) channels.push_back({{"name", c.name}, {"kind", to_string(c.kind)}, {"unit", c.unit}});
  write_json(config.output_dir / "data" / "manifest.json",
             {{"file", "series.csv"},
              {"rows", series.length()},
              {"channels", channels},
              {"start_time", series.start_time},
              {"cadence_seconds", kCadenceSeconds},
              {"fnv1a64", fnv1a_file(path)},
              {"seed", config.seed},
              {"generator", config.generator}});
  spdlog::info("wrote {} rows to {}", series.length(), path.string());
}

void cmd_train(const RunConfig& config, bool resume) {
  const auto dataset = load_dataset(config);
  const auto base = dataset.windows(Split::Train, config.window_length);
  if (base.empty()) throw Error(Errc::EmptyInput, "training split is empty");
  const auto stats = fit_normalizer(base);
  std::vector<TimeSeriesWindow> windows;
  for (const auto& w : dataset.windows(Split::Train, config.train_stride)) windows.push_back(normalize(w, stats));
  spdlog::info("training on {} windows ({} base windows)", windows.size(), base.size());

  const auto dir = config.model_dir();
  const auto arch = architecture_of(config);
  DenoiserParams<float> params;
  OptimizerState<float> optimizer;
  nlohmann::json history = nlohmann::json::array();
  int done = 0;
  if (resume) {
    params = load_params<float>(dir / "weights.json");
    if (!(params.arch == arch)) throw Error(Errc::InvalidConfig, "saved weights do not match the configured architecture");
    optimizer = load_optimizer<float>(dir / "adam.json");
    history = read_json(dir / "loss_history.json").at("epochs");
    done = history.empty() ? 0 : history.back().at("epoch").get<int>();
  } else {
    params = init_params<float>(arch, derive_seed(config.seed, kInitStream));
    optimizer = make_optimizer(params, config.learning_rate);
  }

  TrainOptions options;
  options.epochs = std::max(0, config.epochs - done);
  options.batch_size = config.batch_size;
  options.seed = derive_seed(config.seed, kTrainStream);
  options.start_epoch = done;
  const auto schedule = build_schedule(config.diffusion_steps, config.beta_min, config.beta_max);
  const auto started = std::chrono::steady_clock::now();
  const auto losses = train<float>(params, optimizer, windows, config.mask, schedule, options, [&](const EpochLoss& e) {
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
    spdlog::info("epoch {:>3}  loss {:.5f}  ({:.1f} s)", e.epoch, e.loss, elapsed.count());
  });
  for (const auto& e : losses) history.push_back({{"epoch", e.epoch}, {"loss", e.loss}});

  std::filesystem::create_directories(dir);
  save_params(params, dir / "weights.json");
  save_optimizer(optimizer, dir / "adam.json");
  write_json(dir / "normalization.json", stats);
  write_json(dir / "loss_history.json", {{"epochs", history}});
}

void cmd_calibrate(const RunConfig& config) {
  const auto dataset = load_dataset(config);
  const auto model = load_model(config);
  const auto windows = dataset.windows(Split::Calibration, config.calibration_stride);
  if (windows.empty()) throw Error(Errc::EmptyInput, "calibration split is empty");

  nlohmann::json summary = nlohmann::json::array();
  for (const auto& sensor : config.sensors) {
    const int channel = dataset.series.channel_index(sensor);
    std::map<Condition, std::vector<CalibrationItem>> pools;
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const auto truth = horizon_truth(windows[i], channel, config.horizon);
      if (!truth) continue;
      auto band = forecast_band(model, windows[i], channel, config);
      pools[band.condition].push_back({std::move(band), *truth});
      spdlog::debug("{}: calibration window {}/{}", sensor, i + 1, windows.size());
    }
    for (const auto condition : {Condition::Dry, Condition::Wet}) {
      const auto& pool = pools[condition];
      const ProfileKey key{sensor, condition, config.horizon, config.alpha};
      nlohmann::json entry{{"key", key}, {"pool_size", pool.size()}};
      try {
        const auto started = std::chrono::steady_clock::now();
        const auto profile = calibrate(pool, config.alpha, derive_seed(config.seed, kCalibrationStream));
        const std::chrono::duration<double> fit = std::chrono::steady_clock::now() - started;
        const auto path = config.profile_dir() / profile_file_name(key);
        std::filesystem::create_directories(path.parent_path());
        save_profile(profile, path);
        entry["profile"] = path.filename().string();
        spdlog::info("{} {}: {} series, u* = {:.4f}, search coverage {:.3f}, fit {:.3f} s", sensor,
                     to_string(condition), pool.size(), profile.level, profile.achieved_coverage, fit.count());
      } catch (const Error& e) {
        if (e.code() != Errc::PoolTooSmall && e.code() != Errc::NoFeasibleLevel) throw;
        entry["skipped"] = e.what();
        spdlog::warn("{} {}: {}", sensor, to_string(condition), e.what());
      }
      summary.push_back(std::move(entry));
    }
  }
  write_json(config.profile_dir() / "calibration.json", {{"profiles", summary}});
}

nlohmann::json cmd_predict(const RunConfig& config, const PredictRequest& request) {
  RunConfig c = config;
  if (request.horizon > 0) c.horizon = request.horizon;
  c.validate();
  const auto sensor = request.sensor.empty() ? c.sensors.front() : request.sensor;
  const auto dataset = load_dataset(c);
  const auto window = dataset.base_window(request.window_index);
  const int channel = window.channel_index(sensor);
  const auto condition = classify_condition(window, c.rain_threshold);
  const ProfileKey key{sensor, condition, c.horizon, c.alpha};
  const auto profile_path = c.profile_dir() / profile_file_name(key);
  if (!std::filesystem::exists(profile_path)) {
    throw Error(Errc::MissingProfile, "no correction profile for " + sensor + "/" + to_string(condition) + "/h" +
                                          std::to_string(c.horizon) + " (expected " + profile_path.string() + ")");
  }
  const auto profile = load_profile(profile_path);
  const auto model = load_model(c);
  const auto samples = forecast_samples(model, window, channel, c);
  if (!request.samples_csv.empty()) {
    if (request.samples_csv.has_parent_path()) std::filesystem::create_directories(request.samples_csv.parent_path());
    write_samples_csv(request.samples_csv, samples);
  }
  const auto raw = band_from_samples(samples, c.alpha, condition);
  const auto conformal = apply_corrections(raw, profile);

  nlohmann::json result{{"window_index", request.window_index},
                        {"window_start", window.start_time},
                        {"sensor", sensor},
                        {"condition", to_string(condition)},
                        {"horizon", c.horizon},
                        {"profile", profile_path.filename().string()},
                        {"raw", raw},
                        {"conformalized", conformal}};
  const auto out = request.output.empty()
                       ? c.output_dir / "predictions" /
                             ("window" + std::to_string(request.window_index) + "__" + sensor + "__h" +
                              std::to_string(c.horizon) + ".json")
                       : request.output;
  write_json(out, result);
  if (!request.svg.empty()) {
    auto truth = horizon_truth(window, channel, c.horizon);
    if (!truth) {
      truth.emplace();
      for (const auto& s : raw.steps) truth->push_back(s.median);
    }
    if (request.svg.has_parent_path()) std::filesystem::create_directories(request.svg.parent_path());
    emit_plot(window, raw, conformal, *truth, request.svg);
  }
  spdlog::info("wrote {}", out.string());
  return result;
}

EvaluationReport cmd_evaluate(const RunConfig& config) {
  const auto dataset = load_dataset(config);
  const auto model = load_model(config);
  const auto windows = cap(dataset.windows(Split::Test, config.test_stride), config.max_windows);
  if (windows.empty()) throw Error(Errc::EmptyInput, "test split is empty");
  const auto report_dir = config.output_dir / "report";
  std::filesystem::create_directories(report_dir / "plots");

  std::vector<EvaluationGroup> groups;
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& sensor : config.sensors) {
    const int channel = dataset.series.channel_index(sensor);
    std::map<Condition, EvaluationGroup> by_condition;
    std::map<Condition, std::optional<CorrectionProfile>> profiles;
    for (const auto condition : {Condition::Dry, Condition::Wet}) {
      const auto path = config.profile_dir() / profile_file_name({sensor, condition, config.horizon, config.alpha});
      if (std::filesystem::exists(path)) profiles[condition] = load_profile(path);
      by_condition[condition] = {sensor, condition, {}};
    }
    std::map<Condition, int> plotted;
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const auto& window = windows[i];
      const auto truth = horizon_truth(window, channel, config.horizon);
      if (!truth) continue;
      const auto condition = classify_condition(window, config.rain_threshold);
      if (!profiles[condition]) continue;
      auto raw = forecast_band(model, window, channel, config);
      auto conformal = apply_corrections(raw, *profiles[condition]);
      if (plotted[condition] < config.plots) {
        const auto name = sensor + "__" + to_string(condition) + "__" + std::to_string(window.start_time) + ".svg";
        emit_plot(window, raw, conformal, *truth, report_dir / "plots" / name);
        ++plotted[condition];
      }
      by_condition[condition].items.push_back(
          {std::move(raw), std::move(conformal), *truth, persistence_forecast(window, channel, config.horizon)});
      spdlog::debug("{}: test window {}/{}", sensor, i + 1, windows.size());
    }
    for (const auto condition : {Condition::Dry, Condition::Wet}) {
      auto& group = by_condition[condition];
      if (!profiles[condition]) {
        skipped.push_back({{"sensor", sensor}, {"condition", to_string(condition)}, {"reason", "no correction profile"}});
        spdlog::warn("{} {}: no correction profile, row skipped", sensor, to_string(condition));
      } else if (group.items.empty()) {
        skipped.push_back({{"sensor", sensor}, {"condition", to_string(condition)}, {"reason", "no test windows"}});
      } else {
        groups.push_back(std::move(group));
      }
    }
  }

  const auto report = build_report(groups);
  nlohmann::json j = report;
  j["skipped"] = skipped;
  j["horizon"] = config.horizon;
  j["alpha"] = config.alpha;
  j["samples"] = config.samples;
  write_json(report_dir / "report.json", j);
  std::ofstream table(report_dir / "report.txt");
  table << format_table(report);
  if (!table) throw Error(Errc::IoError, "failed writing report table");
  spdlog::info("report for {} rows written to {}", report.rows.size(), report_dir.string());
  return report;
}

}  // namespace hydrocast
