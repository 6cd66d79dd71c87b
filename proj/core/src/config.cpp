#include "fieldcast/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fieldcast/csv.hpp"

namespace fieldcast {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::vector<std::string> split_list(std::string_view text, char delimiter) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = text.find(delimiter, start);
    const auto item = trim(text.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (!item.empty()) out.emplace_back(item);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

KeyValueConfig KeyValueConfig::parse(std::string_view text, std::string_view source) {
  KeyValueConfig cfg;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || trim(line.substr(0, eq)).empty()) {
      throw std::invalid_argument(std::string(source) + ":" + std::to_string(line_no) +
                                  ": expected 'key = value'");
    }
    cfg.set(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), path.string());
}

void KeyValueConfig::set(std::string key, std::string value) {
  entries_[std::move(key)] = std::move(value);
}

bool KeyValueConfig::contains(std::string_view key) const { return entries_.contains(key); }

std::optional<std::string> KeyValueConfig::get(std::string_view key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_string(std::string_view key, std::string fallback) const {
  auto v = get(key);
  return v ? *v : std::move(fallback);
}

double KeyValueConfig::get_double(std::string_view key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    return csv::parse_real(*v);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + std::string(key) + "': not a number: '" + *v +
                                "'");
  }
}

long long KeyValueConfig::get_integer(std::string_view key, long long fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    return csv::parse_integer(*v);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + std::string(key) + "': not an integer: '" + *v +
                                "'");
  }
}

bool KeyValueConfig::get_bool(std::string_view key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw std::invalid_argument("config key '" + std::string(key) + "': not a boolean: '" + *v +
                              "'");
}

std::vector<std::string> KeyValueConfig::get_list(std::string_view key) const {
  const auto v = get(key);
  return v ? split_list(*v) : std::vector<std::string>{};
}

std::vector<double> KeyValueConfig::get_double_list(std::string_view key) const {
  std::vector<double> out;
  for (const auto& item : get_list(key)) {
    try {
      out.push_back(csv::parse_real(item));
    } catch (const std::exception&) {
      throw std::invalid_argument("config key '" + std::string(key) + "': not a number: '" +
                                  item + "'");
    }
  }
  return out;
}

std::map<std::string, std::string> KeyValueConfig::with_prefix(std::string_view prefix) const {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : entries_) {
    if (k.size() > prefix.size() && k.starts_with(prefix)) out[k.substr(prefix.size())] = v;
  }
  return out;
}

void KeyValueConfig::require_known(const std::vector<std::string_view>& known,
                                   const std::vector<std::string_view>& known_prefixes) const {
  for (const auto& [k, v] : entries_) {
    const bool ok =
        std::find(known.begin(), known.end(), k) != known.end() ||
        std::any_of(known_prefixes.begin(), known_prefixes.end(),
                    [&](std::string_view p) { return std::string_view(k).starts_with(p); });
    if (!ok) throw std::invalid_argument("unknown config key '" + k + "'");
  }
}

}  // namespace fieldcast
