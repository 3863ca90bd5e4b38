#pragma once

#include "hydrocast/band.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace hydrocast {

/// Which bands a profile may correct. Re-fit whenever any field changes.
struct ProfileKey {
  std::string sensor;
  Condition condition = Condition::Dry;
  int horizon = 0;
  double alpha = 0.9;

  bool operator==(const ProfileKey&) const = default;
};

ProfileKey key_of(const IntervalBand& band);

/// Per-step corrections eps_t, widening (or, when negative, narrowing) both
/// bounds of a raw band.
struct CorrectionProfile {
  ProfileKey key;
  std::vector<double> corrections;
  double level = 0.0;  // selected u* = rank / (fit_size + 1)
  int rank = 0;        // order statistic used in every column
  int fit_size = 0;
  int search_size = 0;
  double achieved_coverage = 0.0;  // joint coverage on the search rows
  double plausibility_cap = 0.0;   // |bound| limit applied for infinite corrections

  double mean_correction() const;
};

struct CalibrationItem {
  IntervalBand band;
  std::vector<double> truth;
};

/// max(lo - y, y - hi): negative strictly inside, 0 on a bound. Throws InvertedInterval.
double cqr_score(double y, double lo, double hi);

/// ceil((m + 1) * level), with a 1e-9 allowance so grid levels k / (m + 1) map to rank k.
std::size_t critical_rank(std::size_t m, double level);

/// The critical_rank-th smallest score, or +inf when that rank exceeds m.
/// Throws EmptyInput, LevelOutOfRange.
double critical_quantile(std::span<const double> scores, double level);

/// Row permutation used by calibrate(); the first floor(m / 2) rows fit the
/// per-step score distributions and the rest drive the level search.
std::vector<std::size_t> calibration_split(std::size_t m, std::uint64_t seed);

inline constexpr std::size_t kMinPoolSize = 20;

/// Diagonal empirical-copula search: one common level u over per-step CQR
/// score quantiles, chosen as the smallest grid level k / (m1 + 1) whose
/// thresholds jointly cover at least `alpha` of the search rows.
/// Throws PoolTooSmall, KeyMismatch, AlreadyConformalized, LengthMismatch, NoFeasibleLevel.
CorrectionProfile calibrate(std::span<const CalibrationItem> pool, double alpha, std::uint64_t split_seed);

/// lo - eps_t and hi + eps_t; infinite eps_t clamps to -/+ plausibility_cap.
/// Throws KeyMismatch, AlreadyConformalized.
IntervalBand apply_corrections(const IntervalBand& band, const CorrectionProfile& profile);

/// Fraction of series whose truth lies in [lo_t, hi_t] at every step.
/// Throws EmptyInput, LengthMismatch.
double joint_coverage(std::span<const IntervalBand> bands, std::span<const std::vector<double>> truths);

void to_json(nlohmann::json& j, const ProfileKey& key);
void from_json(const nlohmann::json& j, ProfileKey& key);
void to_json(nlohmann::json& j, const CorrectionProfile& profile);
void from_json(const nlohmann::json& j, CorrectionProfile& profile);

/// e.g. "level_1__wet__h40__a0.90.json"
std::string profile_file_name(const ProfileKey& key);

void save_profile(const CorrectionProfile& profile, const std::filesystem::path& path);
CorrectionProfile load_profile(const std::filesystem::path& path);

}  // namespace hydrocast
