#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fieldcast {

// `key = value` text manifest. Blank lines and lines starting with '#' are
// ignored; later assignments of a key replace earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, std::string_view source = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(std::string key, std::string value);
  bool contains(std::string_view key) const;
  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

  std::optional<std::string> get(std::string_view key) const;
  std::string get_string(std::string_view key, std::string fallback) const;
  double get_double(std::string_view key, double fallback) const;
  long long get_integer(std::string_view key, long long fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  // Comma-separated list; empty items are dropped.
  std::vector<std::string> get_list(std::string_view key) const;
  std::vector<double> get_double_list(std::string_view key) const;

  // Keys starting with `prefix`, with the prefix removed.
  std::map<std::string, std::string> with_prefix(std::string_view prefix) const;

  // Throws std::invalid_argument naming the first key not in `known` and not
  // starting with one of `known_prefixes`.
  void require_known(const std::vector<std::string_view>& known,
                     const std::vector<std::string_view>& known_prefixes = {}) const;

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

std::vector<std::string> split_list(std::string_view text, char delimiter = ',');

}  // namespace fieldcast
