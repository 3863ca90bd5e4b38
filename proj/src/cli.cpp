#include "hydrocast/cli.hpp"

#include "hydrocast/error.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>

namespace hydrocast {

int exit_code(Errc code) {
  switch (code) {
    case Errc::InvalidConfig:
    case Errc::InvalidRange:
    case Errc::InvalidShape:
    case Errc::LevelOutOfRange:
    case Errc::HorizonTooLarge:
    case Errc::RainChannelTargeted:
      return 1;
    case Errc::IoError:
    case Errc::MissingProfile:
      return 3;
    default:
      return 2;
  }
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Probabilistic sewer-level forecasting with calibrated intervals"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::vector<std::string> overrides;
  std::string log_level = "info";
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Master seed");
  auto* out_opt = app.add_option("--out", out_dir, "Output directory");
  app.add_option("--set", overrides, "Override a config field: dotted.path=value")->take_all();
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic recording");
  auto* train = app.add_subcommand("train", "Train the denoiser");
  bool resume = false;
  train->add_flag("--resume", resume, "Continue from saved weights and optimizer state");
  auto* calibrate = app.add_subcommand("calibrate", "Fit correction profiles on the calibration split");
  auto* predict = app.add_subcommand("predict", "Forecast one window");
  PredictRequest request;
  std::string predict_out;
  std::string predict_svg;
  std::string predict_samples;
  predict->add_option("--window-index", request.window_index, "Base window index in the recording")->required();
  predict->add_option("--sensor", request.sensor, "Level channel to forecast");
  predict->add_option("--horizon", request.horizon, "Steps to forecast");
  predict->add_option("--output", predict_out, "Band JSON path");
  predict->add_option("--svg", predict_svg, "Also write a plot here");
  predict->add_option("--samples", predict_samples, "Also write the raw imputations as CSV");
  auto* evaluate = app.add_subcommand("evaluate", "Score the test split");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  auto logger = spdlog::stderr_color_mt("hydrocast");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    const auto config = load_config(config_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(config_path),
                                    overrides, *seed_opt ? std::optional<std::uint64_t>(seed) : std::nullopt,
                                    *out_opt ? std::optional<std::filesystem::path>(out_dir) : std::nullopt);
    if (*synth) {
      cmd_synth(config);
    } else if (*train) {
      cmd_train(config, resume);
    } else if (*calibrate) {
      cmd_calibrate(config);
    } else if (*predict) {
      request.output = predict_out;
      request.svg = predict_svg;
      request.samples_csv = predict_samples;
      const auto result = cmd_predict(config, request);
      std::cout << result.dump(2) << '\n';
    } else if (*evaluate) {
      std::cout << format_table(cmd_evaluate(config));
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return 3;
  }
  return 0;
}

}  // namespace hydrocast
