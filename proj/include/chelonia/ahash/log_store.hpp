#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <vector>

#include "chelonia/ahash/store.hpp"

namespace chelonia::ahash {

struct LogEntry {
  std::uint64_t seq = 0;
  std::uint64_t term = 0;
  std::vector<ChangeRequest> effects;
};

Value toValue(const LogEntry& e);
LogEntry entryFromValue(const Value& v);

struct Snapshot {
  Store store;
  std::uint64_t seq = 0;
  std::uint64_t lastTerm = 0;
};

/// What a node finds on its disk when it starts.
struct Recovered {
  Snapshot snapshot;
  std::vector<LogEntry> tail;  // entries after the snapshot, in order
  std::uint64_t currentTerm = 0;
  std::uint64_t promisedTerm = 0;
};

/// Durable home of one node's log. A log entry is durable once append()
/// returns; saveSnapshot() replaces the snapshot and drops the entries it
/// covers.
class LogStore {
 public:
  virtual ~LogStore() = default;
  virtual Recovered load() = 0;
  virtual void append(const LogEntry& entry) = 0;
  virtual void saveSnapshot(const Snapshot& snapshot) = 0;
  /// Replaces the whole log with `snapshot`, dropping later entries too.
  virtual void reset(const Snapshot& snapshot) = 0;
  virtual void saveTerms(std::uint64_t currentTerm, std::uint64_t promisedTerm) = 0;
};

/// Survives node restarts as long as the object itself lives; the harness
/// keeps one per simulated node.
class MemoryLogStore final : public LogStore {
 public:
  Recovered load() override;
  void append(const LogEntry& entry) override;
  void saveSnapshot(const Snapshot& snapshot) override;
  void reset(const Snapshot& snapshot) override;
  void saveTerms(std::uint64_t currentTerm, std::uint64_t promisedTerm) override;

 private:
  std::mutex mu_;
  Recovered data_;
};

/// <dir>/snapshot holds one frame {seq, lastTerm, objects}; <dir>/log holds
/// one frame per entry; <dir>/terms holds {currentTerm, promisedTerm}. A
/// torn frame at the end of the log is ignored on load.
class FileLogStore final : public LogStore {
 public:
  explicit FileLogStore(std::filesystem::path dir, bool syncWrites = false);

  Recovered load() override;
  void append(const LogEntry& entry) override;
  void saveSnapshot(const Snapshot& snapshot) override;
  void reset(const Snapshot& snapshot) override;
  void saveTerms(std::uint64_t currentTerm, std::uint64_t promisedTerm) override;

 private:
  void writeAtomically(const std::filesystem::path& path, const std::string& bytes);
  void flush(std::ofstream& out, const std::filesystem::path& path);

  std::filesystem::path dir_;
  bool sync_;
  std::mutex mu_;
  std::ofstream log_;
};

}  // namespace chelonia::ahash
