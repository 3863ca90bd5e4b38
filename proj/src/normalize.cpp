#include "hydrocast/normalize.hpp"

#include "hydrocast/error.hpp"

#include <cmath>

namespace hydrocast {

double NormalizationStats::apply(int k, double value) const {
  if (rain_log_transform && k == rain_channel) value = std::log1p(value);
  return (value - mean[k]) / stddev[k];
}

double NormalizationStats::invert(int k, double z) const {
  const double value = z * stddev[k] + mean[k];
  return rain_log_transform && k == rain_channel ? std::expm1(value) : value;
}

NormalizationStats fit_normalizer(std::span<const TimeSeriesWindow> windows, bool rain_log_transform) {
  if (windows.empty()) throw Error(Errc::EmptyInput, "no training windows");
  const auto& first = windows.front();
  const int K = first.channel_count();

  NormalizationStats stats;
  stats.rain_log_transform = rain_log_transform;
  stats.rain_channel = first.rain_channel();
  for (const auto& c : first.channels) stats.channel_names.push_back(c.name);

  // Two passes per channel: mean, then centred sum of squares.
  std::vector<double> sum(K, 0.0);
  std::vector<long> count(K, 0);
  auto transformed = [&](int k, double v) {
    return rain_log_transform && k == stats.rain_channel ? std::log1p(v) : v;
  };
  for (const auto& w : windows) {
    if (w.channel_count() != K) throw Error(Errc::ShapeMismatch, "windows disagree on channel count");
    for (int k = 0; k < K; ++k) {
      for (int l = 0; l < w.length(); ++l) {
        if (!w.observed(k, l)) continue;
        sum[k] += transformed(k, w.values(k, l));
        ++count[k];
      }
    }
  }
  stats.mean.resize(K);
  for (int k = 0; k < K; ++k) {
    if (count[k] < 2) {
      throw Error(Errc::DegenerateChannel, "channel '" + first.channels[k].name + "' has fewer than two observations");
    }
    stats.mean[k] = sum[k] / static_cast<double>(count[k]);
  }
  std::vector<double> ss(K, 0.0);
  for (const auto& w : windows) {
    for (int k = 0; k < K; ++k) {
      for (int l = 0; l < w.length(); ++l) {
        if (!w.observed(k, l)) continue;
        const double d = transformed(k, w.values(k, l)) - stats.mean[k];
        ss[k] += d * d;
      }
    }
  }
  stats.stddev.resize(K);
  for (int k = 0; k < K; ++k) {
    stats.stddev[k] = std::sqrt(ss[k] / static_cast<double>(count[k]));
    if (!(stats.stddev[k] > 0.0)) {
      throw Error(Errc::DegenerateChannel, "channel '" + first.channels[k].name + "' has zero spread");
    }
  }
  return stats;
}

namespace {

template <typename Map>
TimeSeriesWindow transform(const TimeSeriesWindow& window, const NormalizationStats& stats, Map map) {
  if (window.channel_count() != static_cast<int>(stats.mean.size())) {
    throw Error(Errc::ShapeMismatch, "window/statistics channel count mismatch");
  }
  TimeSeriesWindow out = window;
  for (int k = 0; k < window.channel_count(); ++k) {
    for (int l = 0; l < window.length(); ++l) {
      out.values(k, l) = window.observed(k, l) ? map(k, window.values(k, l)) : 0.0;
    }
  }
  return out;
}

}  // namespace

TimeSeriesWindow normalize(const TimeSeriesWindow& window, const NormalizationStats& stats) {
  return transform(window, stats, [&](int k, double v) { return stats.apply(k, v); });
}

TimeSeriesWindow denormalize(const TimeSeriesWindow& window, const NormalizationStats& stats) {
  return transform(window, stats, [&](int k, double z) { return stats.invert(k, z); });
}

void to_json(nlohmann::json& j, const NormalizationStats& stats) {
  j = nlohmann::json{{"channel_names", stats.channel_names},
                     {"mean", stats.mean},
                     {"stddev", stats.stddev},
                     {"rain_log_transform", stats.rain_log_transform},
                     {"rain_channel", stats.rain_channel}};
}

void from_json(const nlohmann::json& j, NormalizationStats& stats) {
  j.at("channel_names").get_to(stats.channel_names);
  j.at("mean").get_to(stats.mean);
  j.at("stddev").get_to(stats.stddev);
  j.at("rain_log_transform").get_to(stats.rain_log_transform);
  j.at("rain_channel").get_to(stats.rain_channel);
  if (stats.mean.size() != stats.channel_names.size() || stats.stddev.size() != stats.channel_names.size()) {
    throw Error(Errc::InvalidConfig, "normalization stats arrays disagree in length");
  }
}

}  // namespace hydrocast
