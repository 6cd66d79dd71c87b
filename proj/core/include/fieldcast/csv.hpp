#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fieldcast::csv {

// Splits one CSV line on commas. Quoting is not supported; none of the
// formats handled here need it.
std::vector<std::string_view> split(std::string_view line);

// Parses a real; empty fields are missing. Throws std::invalid_argument on
// malformed text.
std::optional<double> parse_optional_real(std::string_view field);
double parse_real(std::string_view field);
long long parse_integer(std::string_view field);

// Shortest text that round-trips to the same double.
std::string format_real(double v);
std::string format_optional(const std::optional<double>& v);

struct Table {
  std::vector<std::string> header;
  // Raw lines after the header, with their 1-based line numbers.
  std::vector<std::pair<std::size_t, std::string>> rows;
};

// Reads a file, checks its header row against `expected_header` (when
// given), and drops blank lines. Throws LoadError when the file is missing,
// empty or has the wrong header.
Table read_table(const std::filesystem::path& path, std::string_view expected_header = {});

}  // namespace fieldcast::csv
