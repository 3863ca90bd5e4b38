#include "hydrocast/cli.hpp"

#include "hydrocast/error.hpp"

#include <cmath>
#include <fstream>

namespace hydrocast {

namespace {

nlohmann::json channel_json(const ChannelMeta& c) {
  return {{"name", c.name}, {"kind", to_string(c.kind)}, {"unit", c.unit}};
}

ChannelMeta channel_from_json(const nlohmann::json& j) {
  return {j.at("name").get<std::string>(), channel_kind_from_string(j.at("kind").get<std::string>()),
          j.value("unit", std::string())};
}

/// Every key of `user` must exist in `reference` wherever the reference holds an object.
void check_keys(const nlohmann::json& user, const nlohmann::json& reference, const std::string& prefix) {
  if (!user.is_object() || !reference.is_object()) return;
  for (const auto& [key, value] : user.items()) {
    const auto path = prefix.empty() ? key : prefix + "." + key;
    if (!reference.contains(key)) throw Error(Errc::InvalidConfig, "unknown config field '" + path + "'");
    check_keys(value, reference.at(key), path);
  }
}

}  // namespace

std::vector<ChannelMeta> RunConfig::schema() const { return channels.empty() ? generator.schema() : channels; }

std::filesystem::path RunConfig::data_path() const {
  return csv.empty() ? output_dir / "data" / "series.csv" : csv;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::InvalidConfig, what); };
  if (window_length < 2) fail("window_length must be >= 2");
  if (train_stride < 1 || calibration_stride < 1 || test_stride < 1) fail("strides must be >= 1");
  if (splits.train < 0 || splits.calibration < 0 || splits.test < 0 ||
      std::abs(splits.train + splits.calibration + splits.test - 1.0) > 1e-9) {
    fail("split fractions must be non-negative and sum to 1");
  }
  if (epochs < 0 || batch_size < 1 || !(learning_rate > 0)) fail("training needs epochs >= 0, batch >= 1, lr > 0");
  if (samples < 2) fail("sampling.samples must be >= 2");
  if (threads < 1) fail("sampling.threads must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) fail("conformal.alpha must lie in (0, 1)");
  if (horizon < 1 || horizon >= window_length) fail("conformal.horizon must lie in [1, window_length)");
  if (sensors.empty()) fail("conformal.sensors is empty");
  if (rain_threshold < 0) fail("rain_threshold must be >= 0");
  if (plots < 0 || max_windows < 0) fail("evaluate.plots and evaluate.max_windows must be >= 0");
  validate_schema(schema());
  if (channels.empty()) generator.validate();
  mask.validate(static_cast<int>(schema().size()), window_length);
  Architecture{static_cast<int>(schema().size()), width, blocks, heads, diffusion_steps}.validate();
  build_schedule(diffusion_steps, beta_min, beta_max);
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  nlohmann::json channels = nlohmann::json::array();
  for (const auto& ch : c.channels) channels.push_back(channel_json(ch));
  j = nlohmann::json{
      {"seed", c.seed},
      {"output_dir", c.output_dir.string()},
      {"data",
       {{"csv", c.csv.string()},
        {"channels", channels},
        {"generator", c.generator},
        {"window_length", c.window_length},
        {"train_stride", c.train_stride},
        {"calibration_stride", c.calibration_stride},
        {"test_stride", c.test_stride},
        {"splits", {{"train", c.splits.train}, {"calibration", c.splits.calibration}, {"test", c.splits.test}}}}},
      {"schedule", {{"steps", c.diffusion_steps}, {"beta_min", c.beta_min}, {"beta_max", c.beta_max}}},
      {"model", {{"width", c.width}, {"blocks", c.blocks}, {"heads", c.heads}}},
      {"mask",
       {{"min_horizon", c.mask.min_horizon}, {"max_horizon", c.mask.max_horizon}, {"max_channels", c.mask.max_channels}}},
      {"training", {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate}}},
      {"sampling", {{"samples", c.samples}, {"threads", c.threads}}},
      {"conformal", {{"alpha", c.alpha}, {"horizon", c.horizon}, {"sensors", c.sensors}}},
      {"rain_threshold", c.rain_threshold},
      {"evaluate", {{"plots", c.plots}, {"max_windows", c.max_windows}}}};
}

void from_json(const nlohmann::json& user, RunConfig& c) {
  nlohmann::json j = RunConfig{};
  check_keys(user, j, "");
  j.merge_patch(user);
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.output_dir = j.at("output_dir").get<std::string>();
    const auto& data = j.at("data");
    c.csv = data.at("csv").get<std::string>();
    c.channels.clear();
    for (const auto& ch : data.at("channels")) c.channels.push_back(channel_from_json(ch));
    c.generator = data.at("generator").get<GeneratorConfig>();
    c.window_length = data.at("window_length").get<int>();
    c.train_stride = data.at("train_stride").get<int>();
    c.calibration_stride = data.at("calibration_stride").get<int>();
    c.test_stride = data.at("test_stride").get<int>();
    c.splits = {data.at("splits").at("train").get<double>(), data.at("splits").at("calibration").get<double>(),
                data.at("splits").at("test").get<double>()};
    const auto& schedule = j.at("schedule");
    c.diffusion_steps = schedule.at("steps").get<int>();
    c.beta_min = schedule.at("beta_min").get<double>();
    c.beta_max = schedule.at("beta_max").get<double>();
    const auto& model = j.at("model");
    c.width = model.at("width").get<int>();
    c.blocks = model.at("blocks").get<int>();
    c.heads = model.at("heads").get<int>();
    const auto& mask = j.at("mask");
    c.mask = {mask.at("min_horizon").get<int>(), mask.at("max_horizon").get<int>(), mask.at("max_channels").get<int>()};
    const auto& training = j.at("training");
    c.epochs = training.at("epochs").get<int>();
    c.batch_size = training.at("batch_size").get<int>();
    c.learning_rate = training.at("learning_rate").get<double>();
    c.samples = j.at("sampling").at("samples").get<int>();
    c.threads = j.at("sampling").at("threads").get<int>();
    const auto& conformal = j.at("conformal");
    c.alpha = conformal.at("alpha").get<double>();
    c.horizon = conformal.at("horizon").get<int>();
    c.sensors = conformal.at("sensors").get<std::vector<std::string>>();
    c.rain_threshold = j.at("rain_threshold").get<double>();
    c.plots = j.at("evaluate").at("plots").get<int>();
    c.max_windows = j.at("evaluate").at("max_windows").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, e.what());
  }
}

void apply_override(nlohmann::json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(Errc::InvalidConfig, "override '" + assignment + "' is not of the form path=value");
  }
  const auto path = assignment.substr(0, eq);
  const auto text = assignment.substr(eq + 1);
  auto value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  std::string pointer;
  std::size_t begin = 0;
  while (true) {
    const auto dot = path.find('.', begin);
    pointer += "/" + path.substr(begin, dot == std::string::npos ? std::string::npos : dot - begin);
    if (dot == std::string::npos) break;
    begin = dot + 1;
  }
  try {
    config[nlohmann::json::json_pointer(pointer)] = std::move(value);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, "cannot apply override '" + assignment + "': " + e.what());
  }
}

RunConfig load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides,
                      std::optional<std::uint64_t> seed, const std::optional<std::filesystem::path>& out) {
  nlohmann::json doc = nlohmann::json::object();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw Error(Errc::InvalidConfig, "cannot open config " + file->string());
    doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
      throw Error(Errc::InvalidConfig, file->string() + " is not a JSON object");
    }
  }
  for (const auto& o : overrides) apply_override(doc, o);
  RunConfig config = doc.get<RunConfig>();
  if (seed) config.seed = *seed;
  if (out) config.output_dir = *out;
  config.validate();
  return config;
}

}  // namespace hydrocast
