#include "hydrocast/csv.hpp"

#include "hydrocast/error.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>

namespace hydrocast {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t begin = 0;
  while (true) {
    const auto comma = line.find(',', begin);
    if (comma == std::string_view::npos) {
      cells.push_back(trim(line.substr(begin)));
      return cells;
    }
    cells.push_back(trim(line.substr(begin, comma - begin)));
    begin = comma + 1;
  }
}

// Days since 1970-01-01 for a proleptic Gregorian date (H. Hinnant's algorithm).
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

std::optional<std::int64_t> parse_timestamp(std::string_view text) {
  text = trim(text);
  std::int64_t epoch = 0;
  if (parse_number(text, epoch)) return epoch;

  if (!text.empty() && text.back() == 'Z') text.remove_suffix(1);
  if (text.size() != 19 || text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') ||
      text[13] != ':' || text[16] != ':') {
    return std::nullopt;
  }
  int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
  if (!parse_number(text.substr(0, 4), year) || !parse_number(text.substr(5, 2), month) ||
      !parse_number(text.substr(8, 2), day) || !parse_number(text.substr(11, 2), hour) ||
      !parse_number(text.substr(14, 2), minute) || !parse_number(text.substr(17, 2), second)) {
    return std::nullopt;
  }
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60) return std::nullopt;
  return days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day)) * 86400 + hour * 3600 +
         minute * 60 + second;
}

TimeSeriesWindow load_series(const std::filesystem::path& path, const std::vector<ChannelMeta>& schema) {
  validate_schema(schema);
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::SchemaMismatch, path.string() + " is empty");
  const auto header = split(line);
  if (header.empty() || header.front() != "timestamp") {
    throw Error(Errc::SchemaMismatch, "first column must be 'timestamp'");
  }
  if (header.size() != schema.size() + 1) {
    throw Error(Errc::SchemaMismatch, "header has " + std::to_string(header.size() - 1) + " channels, schema has " +
                                          std::to_string(schema.size()));
  }
  // column_of[k] = CSV column holding schema channel k
  std::vector<std::size_t> column_of(schema.size());
  for (std::size_t k = 0; k < schema.size(); ++k) {
    bool found = false;
    for (std::size_t c = 1; c < header.size(); ++c) {
      if (header[c] == schema[k].name) {
        column_of[k] = c;
        found = true;
      }
    }
    if (!found) throw Error(Errc::SchemaMismatch, "column '" + schema[k].name + "' missing from header");
  }

  const auto K = static_cast<Eigen::Index>(schema.size());
  std::vector<std::vector<double>> values;   // per step
  std::vector<std::vector<char>> observed;   // per step
  std::int64_t first_time = 0;
  std::int64_t last_time = 0;
  std::size_t line_no = 1;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) throw Error(Errc::MalformedRow, where + ": wrong number of cells");
    const auto stamp = parse_timestamp(cells[0]);
    if (!stamp) throw Error(Errc::MalformedRow, where + ": bad timestamp '" + std::string(cells[0]) + "'");

    if (values.empty()) {
      first_time = *stamp;
    } else {
      const std::int64_t gap = *stamp - last_time;
      if (gap <= 0 || gap % kCadenceSeconds != 0) {
        throw Error(Errc::CadenceViolation, where + ": gap of " + std::to_string(gap) + " s");
      }
      for (std::int64_t missing = gap / kCadenceSeconds - 1; missing > 0; --missing) {
        values.emplace_back(schema.size(), 0.0);
        observed.emplace_back(schema.size(), 0);
      }
    }
    last_time = *stamp;

    std::vector<double> row(schema.size(), 0.0);
    std::vector<char> seen(schema.size(), 0);
    for (std::size_t k = 0; k < schema.size(); ++k) {
      const auto cell = cells[column_of[k]];
      if (cell.empty()) continue;
      double v = 0.0;
      if (!parse_number(cell, v)) throw Error(Errc::MalformedRow, where + ": bad number '" + std::string(cell) + "'");
      row[k] = v;
      seen[k] = 1;
    }
    values.push_back(std::move(row));
    observed.push_back(std::move(seen));
  }

  TimeSeriesWindow out;
  out.channels = schema;
  out.start_time = first_time;
  const auto L = static_cast<Eigen::Index>(values.size());
  out.values = Eigen::MatrixXd::Zero(K, L);
  out.observed = BoolArray::Constant(K, L, false);
  for (Eigen::Index l = 0; l < L; ++l) {
    for (Eigen::Index k = 0; k < K; ++k) {
      out.values(k, l) = values[l][k];
      out.observed(k, l) = observed[l][k] != 0;
    }
  }
  return out;
}

std::vector<TimeSeriesWindow> load_csv(const std::filesystem::path& path, const std::vector<ChannelMeta>& schema,
                                       int length) {
  return make_windows(load_series(path, schema), length, length);
}

void write_csv(const std::filesystem::path& path, const TimeSeriesWindow& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << "timestamp";
  for (const auto& c : series.channels) out << ',' << c.name;
  out << '\n';
  char buf[64];
  for (int l = 0; l < series.length(); ++l) {
    out << series.start_time + static_cast<std::int64_t>(l) * kCadenceSeconds;
    for (int k = 0; k < series.channel_count(); ++k) {
      out << ',';
      if (!series.observed(k, l)) continue;
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), series.values(k, l));
      out.write(buf, ptr - buf);
    }
    out << '\n';
  }
  if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

}  // namespace hydrocast
