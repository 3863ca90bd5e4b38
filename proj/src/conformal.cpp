#include "hydrocast/conformal.hpp"

#include "hydrocast/error.hpp"
#include "hydrocast/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace hydrocast {

ProfileKey key_of(const IntervalBand& band) {
  return {band.sensor, band.condition, band.horizon, band.alpha};
}

double CorrectionProfile::mean_correction() const {
  if (corrections.empty()) return 0.0;
  double total = 0.0;
  for (const double c : corrections) total += c;
  return total / static_cast<double>(corrections.size());
}

double cqr_score(double y, double lo, double hi) {
  if (lo > hi) throw Error(Errc::InvertedInterval, "lower bound exceeds upper bound");
  return std::max(lo - y, y - hi);
}

std::size_t critical_rank(std::size_t m, double level) {
  const double raw = static_cast<double>(m + 1) * level;
  return static_cast<std::size_t>(std::max(1.0, std::ceil(raw - 1e-9)));
}

double critical_quantile(std::span<const double> scores, double level) {
  if (scores.empty()) throw Error(Errc::EmptyInput, "no scores");
  if (!(level > 0.0 && level < 1.0)) throw Error(Errc::LevelOutOfRange, "level must lie in (0, 1)");
  const auto rank = critical_rank(scores.size(), level);
  if (rank > scores.size()) return std::numeric_limits<double>::infinity();
  std::vector<double> copy(scores.begin(), scores.end());
  std::nth_element(copy.begin(), copy.begin() + static_cast<std::ptrdiff_t>(rank - 1), copy.end());
  return copy[rank - 1];
}

std::vector<std::size_t> calibration_split(std::size_t m, std::uint64_t seed) {
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), Rng(seed).engine());
  return order;
}

namespace {

void check_pool(std::span<const CalibrationItem> pool, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::LevelOutOfRange, "alpha must lie in (0, 1)");
  if (pool.size() < kMinPoolSize) {
    throw Error(Errc::PoolTooSmall, "pool holds " + std::to_string(pool.size()) + " series, need at least " +
                                        std::to_string(kMinPoolSize));
  }
  const auto key = key_of(pool.front().band);
  if (key.horizon < 1) throw Error(Errc::EmptyTarget, "bands have no steps");
  for (const auto& item : pool) {
    if (item.band.conformalized) throw Error(Errc::AlreadyConformalized, "pool contains a corrected band");
    if (!(key_of(item.band) == key)) throw Error(Errc::KeyMismatch, "pool mixes sensors, conditions, horizons or levels");
    if (item.band.steps.size() != static_cast<std::size_t>(key.horizon) || item.truth.size() != item.band.steps.size()) {
      throw Error(Errc::LengthMismatch, "band, horizon and truth lengths differ");
    }
  }
  if (key.alpha != alpha) throw Error(Errc::KeyMismatch, "bands were built at a different alpha");
}

/// Column-sorted fit scores plus raw search scores, both m x H row-major.
struct ScoreTables {
  std::size_t horizon = 0;
  std::size_t fit_rows = 0;
  std::size_t search_rows = 0;
  std::vector<double> fit_sorted;  // column t occupies [t * fit_rows, (t + 1) * fit_rows)
  std::vector<double> search;      // row i occupies [i * horizon, (i + 1) * horizon)
};

ScoreTables build_tables(std::span<const CalibrationItem> pool, std::uint64_t seed) {
  const auto order = calibration_split(pool.size(), seed);
  ScoreTables tables;
  tables.horizon = pool.front().band.steps.size();
  tables.fit_rows = pool.size() / 2;
  tables.search_rows = pool.size() - tables.fit_rows;
  tables.fit_sorted.resize(tables.fit_rows * tables.horizon);
  tables.search.resize(tables.search_rows * tables.horizon);

  auto score = [&](std::size_t row, std::size_t t) {
    const auto& item = pool[row];
    return cqr_score(item.truth[t], item.band.steps[t].lo, item.band.steps[t].hi);
  };
  for (std::size_t i = 0; i < tables.fit_rows; ++i) {
    for (std::size_t t = 0; t < tables.horizon; ++t) tables.fit_sorted[t * tables.fit_rows + i] = score(order[i], t);
  }
  for (std::size_t t = 0; t < tables.horizon; ++t) {
    auto begin = tables.fit_sorted.begin() + static_cast<std::ptrdiff_t>(t * tables.fit_rows);
    std::sort(begin, begin + static_cast<std::ptrdiff_t>(tables.fit_rows));
  }
  for (std::size_t i = 0; i < tables.search_rows; ++i) {
    for (std::size_t t = 0; t < tables.horizon; ++t) {
      tables.search[i * tables.horizon + t] = score(order[tables.fit_rows + i], t);
    }
  }
  return tables;
}

std::vector<double> thresholds_at(const ScoreTables& tables, std::size_t rank) {
  std::vector<double> out(tables.horizon);
  for (std::size_t t = 0; t < tables.horizon; ++t) out[t] = tables.fit_sorted[t * tables.fit_rows + rank - 1];
  return out;
}

std::size_t covered_rows(const ScoreTables& tables, const std::vector<double>& thresholds) {
  std::size_t covered = 0;
  for (std::size_t i = 0; i < tables.search_rows; ++i) {
    const double* row = tables.search.data() + i * tables.horizon;
    bool inside = true;
    for (std::size_t t = 0; t < tables.horizon && inside; ++t) inside = row[t] <= thresholds[t];
    covered += inside ? 1 : 0;
  }
  return covered;
}

}  // namespace

CorrectionProfile calibrate(std::span<const CalibrationItem> pool, double alpha, std::uint64_t split_seed) {
  check_pool(pool, alpha);
  const auto tables = build_tables(pool, split_seed);
  const auto m1 = tables.fit_rows;
  const auto m2 = static_cast<double>(tables.search_rows);
  auto meets = [&](std::size_t covered) { return static_cast<double>(covered) / m2 >= alpha - 1e-12; };

  // Coverage is monotone in the rank because every threshold is.
  const auto top = covered_rows(tables, thresholds_at(tables, m1));
  if (!meets(top)) {
    throw Error(Errc::NoFeasibleLevel, "even the largest fit scores cover only " + std::to_string(top) + " of " +
                                           std::to_string(tables.search_rows) + " search series");
  }
  std::size_t lo = 1;
  std::size_t hi = m1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (meets(covered_rows(tables, thresholds_at(tables, mid)))) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  const auto thresholds = thresholds_at(tables, lo);

  CorrectionProfile profile;
  profile.key = key_of(pool.front().band);
  profile.corrections = thresholds;
  profile.rank = static_cast<int>(lo);
  profile.level = static_cast<double>(lo) / static_cast<double>(m1 + 1);
  profile.fit_size = static_cast<int>(m1);
  profile.search_size = static_cast<int>(tables.search_rows);
  profile.achieved_coverage = static_cast<double>(covered_rows(tables, thresholds)) / m2;
  double largest = 0.0;
  for (const auto& item : pool) {
    for (const double y : item.truth) largest = std::max(largest, std::abs(y));
  }
  profile.plausibility_cap = 10.0 * largest;
  return profile;
}

IntervalBand apply_corrections(const IntervalBand& band, const CorrectionProfile& profile) {
  if (band.conformalized) throw Error(Errc::AlreadyConformalized, "band is already corrected");
  if (!(key_of(band) == profile.key) || band.steps.size() != profile.corrections.size()) {
    throw Error(Errc::KeyMismatch, "profile was fit for a different sensor, condition, horizon or level");
  }
  IntervalBand out = band;
  out.conformalized = true;
  for (std::size_t t = 0; t < out.steps.size(); ++t) {
    const double eps = profile.corrections[t];
    auto& s = out.steps[t];
    if (std::isinf(eps) && eps > 0) {
      s.lo = -profile.plausibility_cap;
      s.hi = profile.plausibility_cap;
    } else {
      s.lo -= eps;
      s.hi += eps;
    }
  }
  return out;
}

double joint_coverage(std::span<const IntervalBand> bands, std::span<const std::vector<double>> truths) {
  if (bands.empty()) throw Error(Errc::EmptyInput, "no bands");
  if (bands.size() != truths.size()) throw Error(Errc::LengthMismatch, "bands and truths differ in count");
  std::size_t covered = 0;
  for (std::size_t i = 0; i < bands.size(); ++i) {
    const auto& steps = bands[i].steps;
    if (steps.size() != truths[i].size()) throw Error(Errc::LengthMismatch, "band and truth differ in length");
    bool inside = true;
    for (std::size_t t = 0; t < steps.size() && inside; ++t) {
      inside = truths[i][t] >= steps[t].lo && truths[i][t] <= steps[t].hi;
    }
    covered += inside ? 1 : 0;
  }
  return static_cast<double>(covered) / static_cast<double>(bands.size());
}

void to_json(nlohmann::json& j, const ProfileKey& key) {
  j = nlohmann::json{{"sensor", key.sensor},
                     {"condition", to_string(key.condition)},
                     {"horizon", key.horizon},
                     {"alpha", key.alpha}};
}

void from_json(const nlohmann::json& j, ProfileKey& key) {
  key.sensor = j.at("sensor").get<std::string>();
  key.condition = condition_from_string(j.at("condition").get<std::string>());
  key.horizon = j.at("horizon").get<int>();
  key.alpha = j.at("alpha").get<double>();
}

void to_json(nlohmann::json& j, const CorrectionProfile& profile) {
  nlohmann::json eps = nlohmann::json::array();
  for (const double c : profile.corrections) {
    if (std::isfinite(c)) {
      eps.push_back(c);
    } else {
      eps.push_back(nullptr);
    }
  }
  j = nlohmann::json{{"key", profile.key},
                     {"corrections", std::move(eps)},
                     {"level", profile.level},
                     {"rank", profile.rank},
                     {"fit_size", profile.fit_size},
                     {"search_size", profile.search_size},
                     {"achieved_coverage", profile.achieved_coverage},
                     {"plausibility_cap", profile.plausibility_cap}};
}

void from_json(const nlohmann::json& j, CorrectionProfile& profile) {
  profile.key = j.at("key").get<ProfileKey>();
  profile.corrections.clear();
  for (const auto& c : j.at("corrections")) {
    profile.corrections.push_back(c.is_null() ? std::numeric_limits<double>::infinity() : c.get<double>());
  }
  profile.level = j.at("level").get<double>();
  profile.rank = j.at("rank").get<int>();
  profile.fit_size = j.at("fit_size").get<int>();
  profile.search_size = j.at("search_size").get<int>();
  profile.achieved_coverage = j.at("achieved_coverage").get<double>();
  profile.plausibility_cap = j.at("plausibility_cap").get<double>();
}

std::string profile_file_name(const ProfileKey& key) {
  char alpha[32];
  std::snprintf(alpha, sizeof(alpha), "%.2f", key.alpha);
  return key.sensor + "__" + to_string(key.condition) + "__h" + std::to_string(key.horizon) + "__a" + alpha + ".json";
}

void save_profile(const CorrectionProfile& profile, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << nlohmann::json(profile).dump(2) << '\n';
  if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

CorrectionProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingProfile, "no profile at " + path.string());
  try {
    return nlohmann::json::parse(in).get<CorrectionProfile>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::IoError, path.string() + ": " + e.what());
  }
}

}  // namespace hydrocast
