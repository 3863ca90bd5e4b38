#include "hydrocast/band.hpp"

#include "hydrocast/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace hydrocast {

double IntervalBand::mean_width() const {
  if (steps.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : steps) total += s.hi - s.lo;
  return total / static_cast<double>(steps.size());
}

namespace {

double sorted_quantile(const std::vector<double>& sorted, double q) {
  const double index = q * static_cast<double>(sorted.size() - 1);
  const auto below = static_cast<std::size_t>(std::floor(index));
  const auto above = static_cast<std::size_t>(std::ceil(index));
  const double frac = index - static_cast<double>(below);
  return sorted[below] + frac * (sorted[above] - sorted[below]);
}

void check_level(double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw Error(Errc::LevelOutOfRange, "quantile level outside [0, 1]");
}

}  // namespace

double empirical_quantile(std::span<const double> values, double q) {
  if (values.empty()) throw Error(Errc::EmptyInput, "quantile of an empty sample");
  check_level(q);
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted_quantile(sorted, q);
}

IntervalBand band_from_samples(const ImputationSamples& samples, double alpha, Condition condition) {
  if (samples.sample_count() < 2) throw Error(Errc::EmptyInput, "a band needs at least two samples");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::LevelOutOfRange, "alpha must lie in (0, 1)");

  IntervalBand band;
  std::set<int> channels;
  for (const auto& p : samples.positions) channels.insert(p.channel);
  for (const int k : channels) {
    if (!band.sensor.empty()) band.sensor += '+';
    band.sensor += samples.channel_names.at(k);
  }
  band.condition = condition;
  band.horizon = samples.target_count();
  band.alpha = alpha;
  band.q_lo = (1.0 - alpha) / 2.0;
  band.q_hi = 1.0 - band.q_lo;
  band.steps.reserve(samples.target_count());

  std::vector<double> column(samples.sample_count());
  for (int j = 0; j < samples.target_count(); ++j) {
    for (int i = 0; i < samples.sample_count(); ++i) column[i] = samples.values(i, j);
    std::sort(column.begin(), column.end());
    band.steps.push_back({j + 1, sorted_quantile(column, band.q_lo), sorted_quantile(column, band.q_hi),
                          sorted_quantile(column, 0.5)});
  }
  return band;
}

void to_json(nlohmann::json& j, const IntervalBand& band) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : band.steps) {
    steps.push_back({{"step", s.step}, {"lo", s.lo}, {"hi", s.hi}, {"median", s.median}});
  }
  j = nlohmann::json{{"sensor", band.sensor},
                     {"condition", to_string(band.condition)},
                     {"horizon", band.horizon},
                     {"alpha", band.alpha},
                     {"q_lo", band.q_lo},
                     {"q_hi", band.q_hi},
                     {"conformalized", band.conformalized},
                     {"steps", std::move(steps)}};
}

void from_json(const nlohmann::json& j, IntervalBand& band) {
  band.sensor = j.at("sensor").get<std::string>();
  band.condition = condition_from_string(j.at("condition").get<std::string>());
  band.horizon = j.at("horizon").get<int>();
  band.alpha = j.at("alpha").get<double>();
  band.q_lo = j.at("q_lo").get<double>();
  band.q_hi = j.at("q_hi").get<double>();
  band.conformalized = j.at("conformalized").get<bool>();
  band.steps.clear();
  for (const auto& s : j.at("steps")) {
    band.steps.push_back({s.at("step").get<int>(), s.at("lo").get<double>(), s.at("hi").get<double>(),
                          s.at("median").get<double>()});
  }
}

}  // namespace hydrocast
