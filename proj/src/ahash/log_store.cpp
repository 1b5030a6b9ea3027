#include "chelonia/ahash/log_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <iterator>

#include "chelonia/core/errors.hpp"

namespace chelonia::ahash {
namespace fs = std::filesystem;

Value toValue(const LogEntry& e) {
  Value effects = Value::array();
  for (const auto& r : e.effects) effects.push_back(toValue(r));
  return {{"seq", e.seq}, {"term", e.term}, {"effects", std::move(effects)}};
}

LogEntry entryFromValue(const Value& v) {
  LogEntry e;
  e.seq = v.at("seq").get<std::uint64_t>();
  e.term = v.at("term").get<std::uint64_t>();
  for (const auto& r : v.at("effects")) e.effects.push_back(changeFromValue(r));
  return e;
}

Recovered MemoryLogStore::load() {
  std::lock_guard lock(mu_);
  return data_;
}

void MemoryLogStore::append(const LogEntry& entry) {
  std::lock_guard lock(mu_);
  data_.tail.push_back(entry);
}

void MemoryLogStore::saveSnapshot(const Snapshot& snapshot) {
  std::lock_guard lock(mu_);
  data_.snapshot = snapshot;
  std::erase_if(data_.tail, [&](const LogEntry& e) { return e.seq <= snapshot.seq; });
}

void MemoryLogStore::reset(const Snapshot& snapshot) {
  std::lock_guard lock(mu_);
  data_.snapshot = snapshot;
  data_.tail.clear();
}

void MemoryLogStore::saveTerms(std::uint64_t currentTerm, std::uint64_t promisedTerm) {
  std::lock_guard lock(mu_);
  data_.currentTerm = currentTerm;
  data_.promisedTerm = promisedTerm;
}

namespace {

std::string readFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void fsyncPath(const fs::path& path) {
  int fd = ::open(path.c_str(), O_RDONLY);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

}  // namespace

FileLogStore::FileLogStore(fs::path dir, bool syncWrites) : dir_(std::move(dir)), sync_(syncWrites) {
  fs::create_directories(dir_);
}

Recovered FileLogStore::load() {
  std::lock_guard lock(mu_);
  Recovered out;
  std::string snap = readFile(dir_ / "snapshot");
  if (!snap.empty()) {
    Value v;
    if (wire::unframe(snap, v) == 0) throw Error(errc::kBackendFailure, "truncated snapshot in " + dir_.string());
    out.snapshot.seq = v.at("seq").get<std::uint64_t>();
    out.snapshot.lastTerm = v.at("lastTerm").get<std::uint64_t>();
    out.snapshot.store = Store::fromValue(v.at("objects"));
  }
  std::string terms = readFile(dir_ / "terms");
  if (!terms.empty()) {
    Value v;
    if (wire::unframe(terms, v) != 0) {
      out.currentTerm = v.value("currentTerm", std::uint64_t{0});
      out.promisedTerm = v.value("promisedTerm", std::uint64_t{0});
    }
  }
  std::string log = readFile(dir_ / "log");
  std::string_view rest = log;
  std::size_t good = 0;
  while (!rest.empty()) {
    Value v;
    std::size_t used = 0;
    try {
      used = wire::unframe(rest, v);
    } catch (const Error&) {
      used = 0;
    }
    if (used == 0) break;
    auto entry = entryFromValue(v);
    if (entry.seq > out.snapshot.seq) {
      std::uint64_t expected = out.tail.empty() ? out.snapshot.seq + 1 : out.tail.back().seq + 1;
      if (entry.seq != expected) break;
      out.tail.push_back(std::move(entry));
    }
    rest.remove_prefix(used);
    good += used;
  }
  if (good != log.size()) fs::resize_file(dir_ / "log", good);
  log_.close();
  log_.open(dir_ / "log", std::ios::binary | std::ios::app);
  return out;
}

void FileLogStore::flush(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw Error(errc::kBackendFailure, "write failed: " + path.string());
  if (sync_) fsyncPath(path);
}

void FileLogStore::append(const LogEntry& entry) {
  std::lock_guard lock(mu_);
  if (!log_.is_open()) log_.open(dir_ / "log", std::ios::binary | std::ios::app);
  log_ << wire::frame(toValue(entry));
  flush(log_, dir_ / "log");
}

void FileLogStore::writeAtomically(const fs::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << bytes;
    flush(out, tmp);
  }
  fs::rename(tmp, path);
}

void FileLogStore::saveSnapshot(const Snapshot& snapshot) {
  std::lock_guard lock(mu_);
  Value v = {{"seq", snapshot.seq}, {"lastTerm", snapshot.lastTerm}, {"objects", snapshot.store.toValue()}};
  writeAtomically(dir_ / "snapshot", wire::frame(v));
  // Keep only the entries the snapshot does not cover.
  std::string log = readFile(dir_ / "log");
  std::string kept;
  std::string_view rest = log;
  while (!rest.empty()) {
    Value e;
    std::size_t used = wire::unframe(rest, e);
    if (used == 0) break;
    if (e.at("seq").get<std::uint64_t>() > snapshot.seq) kept.append(rest.substr(0, used));
    rest.remove_prefix(used);
  }
  log_.close();
  writeAtomically(dir_ / "log", kept);
  log_.open(dir_ / "log", std::ios::binary | std::ios::app);
}

void FileLogStore::reset(const Snapshot& snapshot) {
  std::lock_guard lock(mu_);
  Value v = {{"seq", snapshot.seq}, {"lastTerm", snapshot.lastTerm}, {"objects", snapshot.store.toValue()}};
  writeAtomically(dir_ / "snapshot", wire::frame(v));
  log_.close();
  writeAtomically(dir_ / "log", {});
  log_.open(dir_ / "log", std::ios::binary | std::ios::app);
}

void FileLogStore::saveTerms(std::uint64_t currentTerm, std::uint64_t promisedTerm) {
  std::lock_guard lock(mu_);
  writeAtomically(dir_ / "terms", wire::frame({{"currentTerm", currentTerm}, {"promisedTerm", promisedTerm}}));
}

}  // namespace chelonia::ahash
