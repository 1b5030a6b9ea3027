#include "chelonia/harness/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "chelonia/core/errors.hpp"
#include "chelonia/core/wire.hpp"

namespace chelonia::harness {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string num(std::uint64_t v) { return std::to_string(v); }

std::string Table::csv() const {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << "\n";
  };
  line(columns);
  for (const auto& r : rows) line(r);
  return out.str();
}

std::vector<double> Table::numbers(const std::string& column) const {
  std::size_t idx = columns.size();
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == column) idx = i;
  }
  if (idx == columns.size()) throw Error(errc::kBadRequest, "no column " + column);
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(std::stod(r.at(idx)));
  return out;
}

void Report::check(const std::string& name, bool pass, const std::string& detail) {
  checks.push_back({name, pass, detail});
}

void Report::metric(const std::string& name, double value) { metrics[name] = num(value); }

bool Report::passed() const {
  for (const auto& c : checks) {
    if (!c.pass) return false;
  }
  return true;
}

const Check* Report::find(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

void Report::merge(const Report& other, const std::string& prefix) {
  for (const auto& [name, t] : other.tables) tables[prefix + name] = t;
  for (const auto& [name, v] : other.metrics) metrics[prefix + name] = v;
  for (const auto& c : other.checks) checks.push_back({prefix + c.name, c.pass, c.detail});
}

std::string Report::summary() const {
  Value checksOut = Value::array();
  for (const auto& c : checks) checksOut.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  Value s = {{"scenario", scenario}, {"kind", kind},    {"seed", seed},
             {"passed", passed()},   {"metrics", metrics}, {"checks", checksOut}};
  return s.dump(2) + "\n";
}

void Report::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [name, t] : tables) {
    std::ofstream f(dir / (name + ".csv"));
    f << t.csv();
  }
  std::ofstream f(dir / "summary.json");
  f << summary();
}

}  // namespace chelonia::harness
