#pragma once

#include "hydrocast/band.hpp"
#include "hydrocast/conformal.hpp"
#include "hydrocast/series.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hydrocast {

/// Mean absolute error. Throws LengthMismatch (also for empty input).
double mae(std::span<const double> truth, std::span<const double> pred);

struct MapeResult {
  double percent = 0.0;
  std::size_t included = 0;
  std::size_t excluded = 0;  // positions with zero truth
};

/// 100 * mean |truth - pred| / |truth| over positions with nonzero truth.
/// Throws LengthMismatch, AllZeroTruth.
MapeResult mape_detail(std::span<const double> truth, std::span<const double> pred);
double mape(std::span<const double> truth, std::span<const double> pred);

/// Repeats the channel's last observed value before the final `horizon`
/// steps. Throws HorizonTooLarge, EmptyInput (nothing observed before the horizon).
std::vector<double> persistence_forecast(const TimeSeriesWindow& window, int channel, int horizon);

struct EvaluationItem {
  IntervalBand raw;
  IntervalBand conformal;
  std::vector<double> truth;
  std::vector<double> baseline;  // optional reference forecast, e.g. persistence
};

struct EvaluationGroup {
  std::string sensor;
  Condition condition = Condition::Dry;
  std::vector<EvaluationItem> items;
};

struct ReportRow {
  std::string sensor;
  Condition condition = Condition::Dry;
  std::size_t series = 0;
  std::size_t positions = 0;
  std::size_t zero_truth_excluded = 0;
  double target_mean = 0.0;
  double target_std = 0.0;
  double mae = 0.0;
  double mape = 0.0;  // NaN when every truth is zero
  double raw_coverage = 0.0;   // percent
  double raw_width = 0.0;
  double conf_coverage = 0.0;  // percent
  double conf_width = 0.0;
  double avg_correction = 0.0;  // mean applied widening of each bound
  double baseline_mae = 0.0;     // NaN unless every item carries a baseline
};

struct EvaluationReport {
  std::vector<ReportRow> rows;
};

/// Medians are the point predictions. Widths and MAE/MAPE average over every
/// position of the group; coverage counts whole series.
/// Throws EmptyGroup, LengthMismatch.
EvaluationReport build_report(std::span<const EvaluationGroup> groups);

void to_json(nlohmann::json& j, const ReportRow& row);
void to_json(nlohmann::json& j, const EvaluationReport& report);

/// Aligned text table, one line per row.
std::string format_table(const EvaluationReport& report);

/// Two stacked panels: rain intensity above, the band's sensor below with the
/// observed context, truth, raw band, conformalized band and median. `window`
/// is in physical units; `truth` covers the final horizon steps.
/// Throws LengthMismatch, SchemaMismatch, IoError.
std::string render_plot(const TimeSeriesWindow& window, const IntervalBand& raw, const IntervalBand& conformal,
                        std::span<const double> truth);
void emit_plot(const TimeSeriesWindow& window, const IntervalBand& raw, const IntervalBand& conformal,
               std::span<const double> truth, const std::filesystem::path& path);

}  // namespace hydrocast
