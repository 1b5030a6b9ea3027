#include "chelonia/shepherd/backend.hpp"

#include <fstream>
#include <iterator>

#include "chelonia/core/errors.hpp"

namespace chelonia::shepherd {

namespace fs = std::filesystem;

namespace {

void checkRef(const std::string& ref) {
  if (ref.empty() || ref.find_first_of("/\\.") != std::string::npos) throw Error(errc::kBadRequest, "bad reference '" + ref + "'");
}

}  // namespace

std::uint64_t MemoryBackend::used() const {
  std::lock_guard lock(mu_);
  std::uint64_t total = 0;
  for (const auto& [_, b] : blobs_) total += b.size();
  return total;
}

void MemoryBackend::write(const std::string& ref, const Bytes& data) {
  std::lock_guard lock(mu_);
  std::uint64_t total = 0;
  for (const auto& [k, b] : blobs_) {
    if (k != ref) total += b.size();
  }
  if (total + data.size() > capacity_) throw Error(errc::kInsufficientSpace, "backend full");
  blobs_[ref] = data;
}

Bytes MemoryBackend::read(const std::string& ref) const {
  std::lock_guard lock(mu_);
  auto it = blobs_.find(ref);
  if (it == blobs_.end()) throw Error(errc::kBackendFailure, "no replica " + ref);
  return it->second;
}

void MemoryBackend::remove(const std::string& ref) {
  std::lock_guard lock(mu_);
  blobs_.erase(ref);
}

bool MemoryBackend::exists(const std::string& ref) const {
  std::lock_guard lock(mu_);
  return blobs_.count(ref) > 0;
}

std::vector<std::string> MemoryBackend::list() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [k, _] : blobs_) out.push_back(k);
  return out;
}

void MemoryBackend::saveIndex(const Value& index) {
  std::lock_guard lock(mu_);
  index_ = index;
}

Value MemoryBackend::loadIndex() const {
  std::lock_guard lock(mu_);
  return index_;
}

void MemoryBackend::flipBit(const std::string& ref, std::size_t bit) {
  std::lock_guard lock(mu_);
  auto it = blobs_.find(ref);
  if (it == blobs_.end() || it->second.empty()) throw Error(errc::kBackendFailure, "no replica " + ref);
  it->second[(bit / 8) % it->second.size()] ^= static_cast<std::uint8_t>(1u << (bit % 8));
}

FileBackend::FileBackend(fs::path dir, std::uint64_t capacity) : dir_(std::move(dir)), capacity_(capacity) {
  std::error_code ec;
  fs::create_directories(dir_ / "data", ec);
  if (ec) throw Error(errc::kBackendFailure, "cannot create " + dir_.string() + ": " + ec.message());
}

fs::path FileBackend::pathFor(const std::string& ref) const {
  checkRef(ref);
  return dir_ / "data" / ref;
}

std::uint64_t FileBackend::used() const {
  std::lock_guard lock(mu_);
  std::uint64_t total = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "data")) {
    if (e.is_regular_file()) total += e.file_size();
  }
  return total;
}

void FileBackend::write(const std::string& ref, const Bytes& data) {
  auto path = pathFor(ref);
  std::lock_guard lock(mu_);
  std::uint64_t total = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "data")) {
    if (e.is_regular_file() && e.path().filename() != ref) total += e.file_size();
  }
  if (total + data.size() > capacity_) throw Error(errc::kInsufficientSpace, "backend full");
  auto tmp = path;
  tmp += ".part";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error(errc::kBackendFailure, "write failed for " + ref);
  }
  fs::rename(tmp, path);
}

Bytes FileBackend::read(const std::string& ref) const {
  auto path = pathFor(ref);
  std::lock_guard lock(mu_);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::kBackendFailure, "no replica " + ref);
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

void FileBackend::remove(const std::string& ref) {
  auto path = pathFor(ref);
  std::lock_guard lock(mu_);
  std::error_code ec;
  fs::remove(path, ec);
}

bool FileBackend::exists(const std::string& ref) const {
  auto path = pathFor(ref);
  std::lock_guard lock(mu_);
  return fs::exists(path);
}

std::vector<std::string> FileBackend::list() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir_ / "data")) {
    auto name = e.path().filename().string();
    if (e.is_regular_file() && name.find('.') == std::string::npos) out.push_back(name);
  }
  return out;
}

void FileBackend::saveIndex(const Value& index) {
  std::lock_guard lock(mu_);
  auto tmp = dir_ / "index.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << index.dump();
    if (!out) throw Error(errc::kBackendFailure, "cannot write index");
  }
  fs::rename(tmp, dir_ / "index.json");
}

Value FileBackend::loadIndex() const {
  std::lock_guard lock(mu_);
  std::ifstream in(dir_ / "index.json");
  if (!in) return nullptr;
  try {
    return Value::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(errc::kBackendFailure, std::string("corrupt index: ") + e.what());
  }
}

void FileBackend::flipBit(const std::string& ref, std::size_t bit) {
  Bytes data = read(ref);
  if (data.empty()) throw Error(errc::kBackendFailure, "empty replica " + ref);
  data[(bit / 8) % data.size()] ^= static_cast<std::uint8_t>(1u << (bit % 8));
  auto path = pathFor(ref);
  std::lock_guard lock(mu_);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

}  // namespace chelonia::shepherd
