#include "chelonia/core/config.hpp"

#include <fstream>
#include <sstream>

#include "chelonia/core/errors.hpp"

namespace chelonia {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) pos = s.size();
    auto piece = trim(s.substr(start, pos - start));
    if (!piece.empty()) out.push_back(std::move(piece));
    start = pos + 1;
  }
  return out;
}

std::optional<std::string> ConfigSection::get(std::string_view key) const {
  auto it = values_.find(std::string(key));
  if (it == values_.end() || it->second.empty()) return std::nullopt;
  return it->second.back();
}

std::string ConfigSection::getString(std::string_view key, std::string fallback) const {
  return get(key).value_or(std::move(fallback));
}

std::string ConfigSection::require(std::string_view key) const {
  auto v = get(key);
  if (!v) throw Error(errc::kBadRequest, "config [" + name_ + "] missing key '" + std::string(key) + "'");
  return *v;
}

double ConfigSection::getDouble(std::string_view key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    return std::stod(*v);
  } catch (const std::exception&) {
    throw Error(errc::kBadRequest, "config [" + name_ + "] key '" + std::string(key) + "' is not a number");
  }
}

std::int64_t ConfigSection::getInt(std::string_view key, std::int64_t fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    return std::stoll(*v);
  } catch (const std::exception&) {
    throw Error(errc::kBadRequest, "config [" + name_ + "] key '" + std::string(key) + "' is not an integer");
  }
}

bool ConfigSection::getBool(std::string_view key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  return *v == "true" || *v == "yes" || *v == "1" || *v == "on";
}

std::vector<std::string> ConfigSection::getList(std::string_view key) const {
  std::vector<std::string> out;
  auto it = values_.find(std::string(key));
  if (it == values_.end()) return out;
  for (const auto& raw : it->second) {
    for (auto& piece : split(raw, ',')) out.push_back(std::move(piece));
  }
  return out;
}

Config Config::parse(std::string_view text) {
  Config cfg;
  cfg.sections_.emplace_back("");
  std::istringstream in{std::string(text)};
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    auto t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw Error(errc::kBadRequest, "config line " + std::to_string(lineNo) + ": bad section header");
      cfg.sections_.emplace_back(trim(std::string_view(t).substr(1, t.size() - 2)));
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos) throw Error(errc::kBadRequest, "config line " + std::to_string(lineNo) + ": expected key = value");
    cfg.sections_.back().add(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
  }
  if (cfg.sections_.front().values().empty()) cfg.sections_.erase(cfg.sections_.begin());
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(errc::kBadRequest, "cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const ConfigSection* Config::find(std::string_view name) const {
  for (const auto& s : sections_) {
    if (s.name() == name) return &s;
  }
  return nullptr;
}

std::vector<const ConfigSection*> Config::all(std::string_view name) const {
  std::vector<const ConfigSection*> out;
  for (const auto& s : sections_) {
    if (s.name() == name) out.push_back(&s);
  }
  return out;
}

}  // namespace chelonia
