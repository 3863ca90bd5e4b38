#pragma once

#include "hydrocast/series.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

namespace hydrocast {

/// Reads a `timestamp,<channel>...` file into one recording. Empty cells are
/// unobserved; gaps that are whole multiples of the cadence become fully
/// unobserved rows. Columns are matched to `schema` by name.
TimeSeriesWindow load_series(const std::filesystem::path& path, const std::vector<ChannelMeta>& schema);

/// load_series() cut into consecutive non-overlapping windows of `length` steps.
std::vector<TimeSeriesWindow> load_csv(const std::filesystem::path& path, const std::vector<ChannelMeta>& schema,
                                       int length = kDefaultWindowLength);

/// Writes epoch-second timestamps and shortest round-trip decimal values.
void write_csv(const std::filesystem::path& path, const TimeSeriesWindow& series);

/// Accepts integer epoch seconds or ISO-8601 `YYYY-MM-DDTHH:MM:SS[Z]`.
std::optional<std::int64_t> parse_timestamp(std::string_view text);

}  // namespace hydrocast
