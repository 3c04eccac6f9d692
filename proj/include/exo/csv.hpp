#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace exo::csv {

/// Shortest text that parses back to exactly `value`.
std::string format_double(double value);

/// Parses a whole field as a double; throws FormatError naming `field`.
double parse_double(std::string_view text, std::string_view field);

std::vector<std::string> split(std::string_view line, char sep = ',');

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
  std::vector<std::string> comments;      // '#' lines, without the marker

  /// Column position by name or FormatError.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
};

/// Reads a header-first CSV. Blank lines are skipped, '#' lines collected.
/// Rows whose width differs from the header raise FormatError with the
/// line number.
Table read(const std::filesystem::path& path);

}  // namespace exo::csv
