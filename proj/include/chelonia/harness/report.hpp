#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace chelonia::harness {

/// A CSV table. Cells are stored as text so that output is byte-stable.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
  std::string csv() const;
  /// Column by name, parsed as numbers.
  std::vector<double> numbers(const std::string& column) const;
};

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Outcome of one scenario run: named tables, scalar metrics and the list
/// of assertions with their verdicts.
struct Report {
  std::string scenario;
  std::string kind;
  std::uint64_t seed = 0;
  std::map<std::string, Table> tables;
  std::map<std::string, std::string> metrics;
  std::vector<Check> checks;

  void check(const std::string& name, bool pass, const std::string& detail = {});
  void metric(const std::string& name, double value);
  void metric(const std::string& name, const std::string& value) { metrics[name] = value; }
  bool passed() const;
  const Check* find(const std::string& name) const;

  /// Every table and check of `other`, with names prefixed.
  void merge(const Report& other, const std::string& prefix);

  /// JSON-like summary of metrics and assertions.
  std::string summary() const;
  /// Writes <table>.csv for each table and summary.json into `dir`.
  void write(const std::filesystem::path& dir) const;
};

// Fixed formatting used in every table cell.
std::string num(double v);
std::string num(std::uint64_t v);
inline std::string num(int v) { return std::to_string(v); }

}  // namespace chelonia::harness
