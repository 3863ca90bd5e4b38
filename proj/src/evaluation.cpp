#include "hydrocast/evaluation.hpp"

#include "hydrocast/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>

namespace hydrocast {

double mae(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size() || truth.empty()) {
    throw Error(Errc::LengthMismatch, "mae needs equal, non-empty inputs");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) total += std::abs(truth[i] - pred[i]);
  return total / static_cast<double>(truth.size());
}

MapeResult mape_detail(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) throw Error(Errc::LengthMismatch, "mape needs equal-length inputs");
  MapeResult r;
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 0.0) {
      ++r.excluded;
      continue;
    }
    total += std::abs(truth[i] - pred[i]) / std::abs(truth[i]);
    ++r.included;
  }
  if (r.included == 0) throw Error(Errc::AllZeroTruth, "every truth value is zero");
  r.percent = 100.0 * total / static_cast<double>(r.included);
  return r;
}

double mape(std::span<const double> truth, std::span<const double> pred) { return mape_detail(truth, pred).percent; }

std::vector<double> persistence_forecast(const TimeSeriesWindow& window, int channel, int horizon) {
  if (horizon < 0 || horizon >= window.length()) {
    throw Error(Errc::HorizonTooLarge, "horizon must leave at least one context step");
  }
  for (int l = window.length() - horizon - 1; l >= 0; --l) {
    if (window.observed(channel, l)) return std::vector<double>(static_cast<std::size_t>(horizon), window.values(channel, l));
  }
  throw Error(Errc::EmptyInput, "channel has no observed context");
}

EvaluationReport build_report(std::span<const EvaluationGroup> groups) {
  EvaluationReport report;
  for (const auto& group : groups) {
    if (group.items.empty()) {
      throw Error(Errc::EmptyGroup, group.sensor + "/" + to_string(group.condition) + " has no series");
    }
    ReportRow row;
    row.sensor = group.sensor;
    row.condition = group.condition;
    row.series = group.items.size();

    std::vector<double> truth;
    std::vector<double> median;
    std::vector<double> baseline;
    bool has_baseline = true;
    std::size_t raw_covered = 0;
    std::size_t conf_covered = 0;
    double raw_width = 0.0;
    double conf_width = 0.0;
    double correction = 0.0;
    for (const auto& item : group.items) {
      const auto& raw = item.raw.steps;
      const auto& conf = item.conformal.steps;
      if (raw.size() != item.truth.size() || conf.size() != item.truth.size()) {
        throw Error(Errc::LengthMismatch, "band and truth lengths differ");
      }
      if (item.baseline.size() == item.truth.size()) {
        baseline.insert(baseline.end(), item.baseline.begin(), item.baseline.end());
      } else {
        has_baseline = false;
      }
      bool raw_in = true;
      bool conf_in = true;
      for (std::size_t t = 0; t < raw.size(); ++t) {
        const double y = item.truth[t];
        truth.push_back(y);
        median.push_back(raw[t].median);
        raw_in = raw_in && y >= raw[t].lo && y <= raw[t].hi;
        conf_in = conf_in && y >= conf[t].lo && y <= conf[t].hi;
        raw_width += raw[t].hi - raw[t].lo;
        conf_width += conf[t].hi - conf[t].lo;
        correction += ((raw[t].lo - conf[t].lo) + (conf[t].hi - raw[t].hi)) / 2.0;
      }
      raw_covered += raw_in ? 1 : 0;
      conf_covered += conf_in ? 1 : 0;
    }
    row.positions = truth.size();
    if (truth.empty()) throw Error(Errc::EmptyGroup, group.sensor + " bands have no steps");
    const double n = static_cast<double>(truth.size());

    double sum = 0.0;
    for (const double y : truth) sum += y;
    row.target_mean = sum / n;
    double sq = 0.0;
    for (const double y : truth) sq += (y - row.target_mean) * (y - row.target_mean);
    row.target_std = std::sqrt(sq / n);

    row.mae = mae(truth, median);
    row.baseline_mae = has_baseline ? mae(truth, baseline) : std::numeric_limits<double>::quiet_NaN();
    try {
      const auto m = mape_detail(truth, median);
      row.mape = m.percent;
      row.zero_truth_excluded = m.excluded;
    } catch (const Error& e) {
      if (e.code() != Errc::AllZeroTruth) throw;
      row.mape = std::numeric_limits<double>::quiet_NaN();
      row.zero_truth_excluded = truth.size();
    }
    const double series = static_cast<double>(row.series);
    row.raw_coverage = 100.0 * static_cast<double>(raw_covered) / series;
    row.conf_coverage = 100.0 * static_cast<double>(conf_covered) / series;
    row.raw_width = raw_width / n;
    row.conf_width = conf_width / n;
    row.avg_correction = correction / n;
    report.rows.push_back(std::move(row));
  }
  return report;
}

void to_json(nlohmann::json& j, const ReportRow& row) {
  j = nlohmann::json{{"sensor", row.sensor},
                     {"condition", to_string(row.condition)},
                     {"series", row.series},
                     {"positions", row.positions},
                     {"zero_truth_excluded", row.zero_truth_excluded},
                     {"target_mean", row.target_mean},
                     {"target_std", row.target_std},
                     {"mae", row.mae},
                     {"mape_percent", std::isnan(row.mape) ? nlohmann::json(nullptr) : nlohmann::json(row.mape)},
                     {"raw_coverage_percent", row.raw_coverage},
                     {"raw_width", row.raw_width},
                     {"conformal_coverage_percent", row.conf_coverage},
                     {"conformal_width", row.conf_width},
                     {"avg_correction", row.avg_correction},
                     {"baseline_mae", std::isnan(row.baseline_mae) ? nlohmann::json(nullptr)
                                                                   : nlohmann::json(row.baseline_mae)}};
}

void to_json(nlohmann::json& j, const EvaluationReport& report) {
  j = nlohmann::json{{"rows", report.rows}};
}

namespace {

std::string format(const char* fmt, ...) {
  char buf[256];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return buf;
}

}  // namespace

std::string format_table(const EvaluationReport& report) {
  const std::vector<std::string> header{"Sensor",     "Condition", "Avg target",  "MAE",        "MAPE",    "Raw cov %",
                                        "Raw width",  "Conf cov %", "Conf width", "Avg corr",   "Series"};
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& r : report.rows) {
    cells.push_back({r.sensor, to_string(r.condition), format("%.4f +- %.4f", r.target_mean, r.target_std),
                     format("%.4f", r.mae), std::isnan(r.mape) ? "n/a" : format("%.4f", r.mape),
                     format("%.2f", r.raw_coverage), format("%.4f", r.raw_width), format("%.2f", r.conf_coverage),
                     format("%.4f", r.conf_width), format("%.4f", r.avg_correction), std::to_string(r.series)});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::string out;
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c > 0) out += "  ";
      const auto pad = std::string(width[c] - line[c].size(), ' ');
      out += c < 2 ? line[c] + pad : pad + line[c];
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

constexpr double kWidth = 800.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 780.0;
constexpr double kRainTop = 40.0;
constexpr double kRainBottom = 150.0;
constexpr double kLevelTop = 190.0;
constexpr double kLevelBottom = 460.0;
constexpr double kHeight = 500.0;

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  double top = 0.0;
  double bottom = 0.0;

  double map(double v) const { return bottom - (v - lo) / (hi - lo) * (bottom - top); }
};

Axis fit_axis(const std::vector<double>& values, double top, double bottom, bool from_zero) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const double v : values) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (from_zero) lo = std::min(lo, 0.0);
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = from_zero ? 0.0 : 0.05 * (hi - lo);
  return {lo - pad, hi + (from_zero ? 0.05 * (hi - lo) : pad), top, bottom};
}

std::string point(double x, double y) { return format("%.2f,%.2f", x, y); }

std::string polyline(const std::vector<std::pair<double, double>>& pts, const char* style) {
  std::string out = "<polyline fill=\"none\" " + std::string(style) + " points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i > 0) out += ' ';
    out += point(pts[i].first, pts[i].second);
  }
  return out + "\"/>\n";
}

std::string band_polygon(const std::vector<BandStep>& steps, int first_step, const std::function<double(int)>& x,
                         const Axis& axis, const char* style, double cap) {
  auto clip = [&](double v) { return std::clamp(v, axis.lo - cap, axis.hi + cap); };
  std::string out = "<polygon " + std::string(style) + " points=\"";
  for (std::size_t t = 0; t < steps.size(); ++t) {
    if (t > 0) out += ' ';
    out += point(x(first_step + static_cast<int>(t)), axis.map(clip(steps[t].hi)));
  }
  for (std::size_t t = steps.size(); t-- > 0;) {
    out += ' ' + point(x(first_step + static_cast<int>(t)), axis.map(clip(steps[t].lo)));
  }
  return out + "\"/>\n";
}

std::string escape(const std::string& text) {
  std::string out;
  for (const char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string label(double x, double y, const std::string& text, const char* anchor = "start") {
  return format("<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"%s\">", x, y,
                anchor) +
         escape(text) + "</text>\n";
}

}  // namespace

std::string render_plot(const TimeSeriesWindow& window, const IntervalBand& raw, const IntervalBand& conformal,
                        std::span<const double> truth) {
  const auto h = truth.size();
  if (raw.steps.size() != h || conformal.steps.size() != h) {
    throw Error(Errc::LengthMismatch, "bands and truth must share the horizon");
  }
  if (h >= static_cast<std::size_t>(window.length())) throw Error(Errc::LengthMismatch, "horizon exceeds window");
  const int sensor = window.channel_index(raw.sensor);
  const int rain = window.rain_channel();
  const int length = window.length();
  const int first = length - static_cast<int>(h);
  auto x = [&](int l) { return kLeft + (kRight - kLeft) * (length > 1 ? static_cast<double>(l) / (length - 1) : 0.0); };

  std::vector<double> rain_values;
  for (int l = 0; l < length; ++l) {
    if (window.observed(rain, l)) rain_values.push_back(window.values(rain, l));
  }
  std::vector<double> level_values;
  for (int l = 0; l < first; ++l) {
    if (window.observed(sensor, l)) level_values.push_back(window.values(sensor, l));
  }
  for (std::size_t t = 0; t < h; ++t) {
    level_values.insert(level_values.end(), {truth[t], raw.steps[t].lo, raw.steps[t].hi, conformal.steps[t].lo,
                                             conformal.steps[t].hi});
  }
  const Axis rain_axis = fit_axis(rain_values, kRainTop, kRainBottom, true);
  const Axis level_axis = fit_axis(level_values, kLevelTop, kLevelBottom, false);
  const double overflow = level_axis.hi - level_axis.lo;

  std::string svg = format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n", kWidth,
      kHeight, kWidth, kHeight);
  svg += format("<rect x=\"0\" y=\"0\" width=\"%.0f\" height=\"%.0f\" fill=\"white\"/>\n", kWidth, kHeight);
  if (h > 0) {
    const double x0 = x(first);
    svg += format("<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"#f2f2f2\"/>\n", x0, kRainTop,
                  kRight - x0, kLevelBottom - kRainTop);
  }
  svg += format("<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" stroke=\"#444\"/>\n", kLeft,
                kRainTop, kRight - kLeft, kRainBottom - kRainTop);
  svg += format("<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" stroke=\"#444\"/>\n", kLeft,
                kLevelTop, kRight - kLeft, kLevelBottom - kLevelTop);

  // Rain as bars from the zero line.
  const double bar = std::max(1.0, (kRight - kLeft) / std::max(1, length));
  svg += "<g fill=\"#3b6fb6\">\n";
  for (int l = 0; l < length; ++l) {
    if (!window.observed(rain, l) || window.values(rain, l) <= 0.0) continue;
    const double top = rain_axis.map(window.values(rain, l));
    svg += format("<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\"/>\n", x(l) - bar / 2, top, bar,
                  rain_axis.map(0.0) - top);
  }
  svg += "</g>\n";

  if (h > 0) {
    svg += band_polygon(conformal.steps, first, x, level_axis, "fill=\"#f4a259\" fill-opacity=\"0.45\" stroke=\"#d9822b\"",
                        overflow);
    svg += band_polygon(raw.steps, first, x, level_axis, "fill=\"#5b8e7d\" fill-opacity=\"0.55\" stroke=\"#3d6b5b\"",
                        overflow);
  }

  std::vector<std::pair<double, double>> context;
  for (int l = 0; l < first; ++l) {
    if (window.observed(sensor, l)) context.emplace_back(x(l), level_axis.map(window.values(sensor, l)));
  }
  if (!context.empty()) svg += polyline(context, "stroke=\"#222\" stroke-width=\"1.2\"");
  if (h > 0) {
    std::vector<std::pair<double, double>> truth_line;
    std::vector<std::pair<double, double>> median_line;
    for (std::size_t t = 0; t < h; ++t) {
      truth_line.emplace_back(x(first + static_cast<int>(t)), level_axis.map(truth[t]));
      median_line.emplace_back(x(first + static_cast<int>(t)), level_axis.map(raw.steps[t].median));
    }
    svg += polyline(truth_line, "stroke=\"#222\" stroke-width=\"1.2\"");
    svg += polyline(median_line, "stroke=\"#b23a48\" stroke-width=\"1.2\" stroke-dasharray=\"4 3\"");
    const double x0 = x(first);
    svg += format("<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#888\" stroke-dasharray=\"2 2\"/>\n", x0,
                  kRainTop, x0, kLevelBottom);
  }

  svg += label(kLeft, kRainTop - 8, window.channels[rain].name + " intensity");
  svg += label(kLeft, kLevelTop - 8,
               raw.sensor + " (" + to_string(raw.condition) + ", horizon " + std::to_string(h) + ")");
  svg += label(kLeft - 6, kRainTop + 4, format("%.3f", rain_axis.hi), "end");
  svg += label(kLeft - 6, kRainBottom, format("%.3f", rain_axis.lo), "end");
  svg += label(kLeft - 6, kLevelTop + 4, format("%.4f", level_axis.hi), "end");
  svg += label(kLeft - 6, kLevelBottom, format("%.4f", level_axis.lo), "end");
  svg += label(kRight, kHeight - 14, "truth: black, median: dashed red, raw band: green, conformalized: orange", "end");
  svg += "</svg>\n";
  return svg;
}

void emit_plot(const TimeSeriesWindow& window, const IntervalBand& raw, const IntervalBand& conformal,
               std::span<const double> truth, const std::filesystem::path& path) {
  const auto svg = render_plot(window, raw, conformal, truth);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << svg;
  if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

}  // namespace hydrocast
