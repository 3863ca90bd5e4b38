#include "hydrocast/series.hpp"

#include "hydrocast/error.hpp"

#include <set>

namespace hydrocast {

const char* to_string(ChannelKind kind) noexcept { return kind == ChannelKind::Rain ? "rain" : "level"; }

const char* to_string(Condition condition) noexcept { return condition == Condition::Wet ? "wet" : "dry"; }

Condition condition_from_string(std::string_view text) {
  if (text == "dry") return Condition::Dry;
  if (text == "wet") return Condition::Wet;
  throw Error(Errc::InvalidConfig, "unknown condition '" + std::string(text) + "'");
}

ChannelKind channel_kind_from_string(std::string_view text) {
  if (text == "level") return ChannelKind::Level;
  if (text == "rain") return ChannelKind::Rain;
  throw Error(Errc::InvalidConfig, "unknown channel kind '" + std::string(text) + "'");
}

int TimeSeriesWindow::rain_channel() const {
  for (std::size_t k = 0; k < channels.size(); ++k) {
    if (channels[k].kind == ChannelKind::Rain) return static_cast<int>(k);
  }
  throw Error(Errc::NoRainChannel, "window has no rain channel");
}

int TimeSeriesWindow::channel_index(std::string_view name) const {
  for (std::size_t k = 0; k < channels.size(); ++k) {
    if (channels[k].name == name) return static_cast<int>(k);
  }
  throw Error(Errc::SchemaMismatch, "unknown channel '" + std::string(name) + "'");
}

TimeSeriesWindow TimeSeriesWindow::slice(int begin, int len) const {
  TimeSeriesWindow out;
  out.values = values.middleCols(begin, len);
  out.observed = observed.middleCols(begin, len);
  out.start_time = start_time + static_cast<std::int64_t>(begin) * kCadenceSeconds;
  out.channels = channels;
  return out;
}

void validate_schema(const std::vector<ChannelMeta>& schema) {
  if (schema.size() < 2) throw Error(Errc::SchemaMismatch, "need at least two channels");
  int rain = 0;
  std::set<std::string> names;
  for (const auto& c : schema) {
    if (c.kind == ChannelKind::Rain) ++rain;
    if (!names.insert(c.name).second) throw Error(Errc::SchemaMismatch, "duplicate channel name '" + c.name + "'");
  }
  if (rain != 1) throw Error(Errc::SchemaMismatch, "schema needs exactly one rain channel");
}

std::vector<TimeSeriesWindow> make_windows(const TimeSeriesWindow& series, int length, int stride) {
  if (length < 1 || stride < 1) throw Error(Errc::InvalidConfig, "window length and stride must be positive");
  std::vector<TimeSeriesWindow> out;
  for (int begin = 0; begin + length <= series.length(); begin += stride) {
    out.push_back(series.slice(begin, length));
  }
  return out;
}

Condition classify_condition(const TimeSeriesWindow& window, double threshold) {
  if (!(threshold >= 0.0)) throw Error(Errc::InvalidRange, "rain threshold must be >= 0");
  const int rain = window.rain_channel();
  for (int l = 0; l < window.length(); ++l) {
    if (window.observed(rain, l) && window.values(rain, l) >= threshold) return Condition::Wet;
  }
  return Condition::Dry;
}

}  // namespace hydrocast
