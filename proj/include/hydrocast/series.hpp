#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hydrocast {

enum class ChannelKind { Level, Rain };

struct ChannelMeta {
  std::string name;
  ChannelKind kind = ChannelKind::Level;
  std::string unit;

  bool operator==(const ChannelMeta&) const = default;
};

enum class Condition { Dry, Wet };

const char* to_string(ChannelKind kind) noexcept;
const char* to_string(Condition condition) noexcept;
Condition condition_from_string(std::string_view text);
ChannelKind channel_kind_from_string(std::string_view text);

using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr std::int64_t kCadenceSeconds = 360;
inline constexpr int kDefaultWindowLength = 240;
inline constexpr double kDefaultRainThreshold = 0.1;

/// K x L block of channel readings. Also used for whole recordings, in which
/// case L is the recording length and make_windows() slices it.
///
/// Positions with observed == false hold a sentinel (0) that no consumer reads.
struct TimeSeriesWindow {
  Eigen::MatrixXd values;
  BoolArray observed;
  std::int64_t start_time = 0;
  std::vector<ChannelMeta> channels;

  int channel_count() const { return static_cast<int>(values.rows()); }
  int length() const { return static_cast<int>(values.cols()); }

  /// Index of the single rain channel; throws NoRainChannel.
  int rain_channel() const;
  /// Throws SchemaMismatch for unknown names.
  int channel_index(std::string_view name) const;

  /// Sub-range [begin, begin + len) in time.
  TimeSeriesWindow slice(int begin, int len) const;
};

/// Checks K >= 2, exactly one rain channel and unique names. Throws SchemaMismatch.
void validate_schema(const std::vector<ChannelMeta>& schema);

/// Cuts a recording into windows of `length` steps every `stride` steps;
/// a trailing partial window is dropped.
std::vector<TimeSeriesWindow> make_windows(const TimeSeriesWindow& series, int length, int stride);

/// Wet iff any observed rain value reaches `threshold` (mm/h).
Condition classify_condition(const TimeSeriesWindow& window, double threshold = kDefaultRainThreshold);

}  // namespace hydrocast
