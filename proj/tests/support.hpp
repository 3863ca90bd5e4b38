#pragma once

#include "hydrocast/series.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace hydrocast::testing {

/// Level channels level_0..level_{K-2} followed by one rain channel.
inline std::vector<ChannelMeta> schema(int channels) {
  std::vector<ChannelMeta> s;
  for (int k = 0; k + 1 < channels; ++k) s.push_back({"level_" + std::to_string(k), ChannelKind::Level, "m"});
  s.push_back({"rain", ChannelKind::Rain, "mm/h"});
  return s;
}

/// Fully observed window with N(0, 1) values (rain non-negative).
inline TimeSeriesWindow random_window(int channels, int length, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  TimeSeriesWindow w;
  w.channels = schema(channels);
  w.values.resize(channels, length);
  w.observed = BoolArray::Constant(channels, length, true);
  for (int k = 0; k < channels; ++k) {
    for (int l = 0; l < length; ++l) w.values(k, l) = normal(gen);
  }
  w.values.row(channels - 1) = w.values.row(channels - 1).cwiseAbs();
  w.start_time = 1'600'000'000;
  return w;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("hydrocast_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace hydrocast::testing
