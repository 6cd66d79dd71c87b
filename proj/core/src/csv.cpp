#include "fieldcast/csv.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>

#include "fieldcast/types.hpp"

namespace fieldcast::csv {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

std::optional<double> parse_optional_real(std::string_view field) {
  field = trim(field);
  if (field.empty()) return std::nullopt;
  return parse_real(field);
}

double parse_real(std::string_view field) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw std::invalid_argument("malformed number '" + std::string(field) + "'");
  }
  return v;
}

long long parse_integer(std::string_view field) {
  field = trim(field);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw std::invalid_argument("malformed integer '" + std::string(field) + "'");
  }
  return v;
}

std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string();
}

Table read_table(const std::filesystem::path& path, std::string_view expected_header) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open '" + path.string() + "'");
  Table table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (!have_header) {
      for (auto f : split(line)) table.header.emplace_back(f);
      have_header = true;
      if (!expected_header.empty()) {
        std::vector<std::string> want;
        for (auto f : split(expected_header)) want.emplace_back(f);
        if (table.header != want) {
          throw LoadError(path.string() + ":" + std::to_string(line_no) +
                                   ": expected header '" + std::string(expected_header) + "'");
        }
      }
      continue;
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    table.rows.emplace_back(line_no, std::move(line));
  }
  if (!have_header) throw LoadError("'" + path.string() + "' is empty");
  return table;
}

}  // namespace fieldcast::csv
