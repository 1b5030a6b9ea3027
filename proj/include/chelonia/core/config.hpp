#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace chelonia {

/// Sectioned key=value configuration:
///
///     # comment
///     [section]
///     key = value
///     key = second value      (repeated keys accumulate)
///     list = a, b, c
///
/// A section header may repeat (`[shepherd]` twice declares two shepherds);
/// each occurrence becomes its own ConfigSection, in file order.
class ConfigSection {
 public:
  explicit ConfigSection(std::string name = {}) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }

  void add(std::string key, std::string value) { values_[std::move(key)].push_back(std::move(value)); }

  bool has(std::string_view key) const { return values_.find(std::string(key)) != values_.end(); }

  std::optional<std::string> get(std::string_view key) const;
  std::string getString(std::string_view key, std::string fallback = {}) const;
  std::string require(std::string_view key) const;
  double getDouble(std::string_view key, double fallback) const;
  std::int64_t getInt(std::string_view key, std::int64_t fallback) const;
  bool getBool(std::string_view key, bool fallback) const;

  // All values of a key, with comma-separated entries split and trimmed.
  std::vector<std::string> getList(std::string_view key) const;

  const std::map<std::string, std::vector<std::string>>& values() const { return values_; }

 private:
  std::string name_;
  std::map<std::string, std::vector<std::string>> values_;
};

class Config {
 public:
  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);

  const std::vector<ConfigSection>& sections() const { return sections_; }

  // First section with this name, if any.
  const ConfigSection* find(std::string_view name) const;
  std::vector<const ConfigSection*> all(std::string_view name) const;

 private:
  std::vector<ConfigSection> sections_;
};

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

}  // namespace chelonia
