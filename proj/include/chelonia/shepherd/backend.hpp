#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "chelonia/core/wire.hpp"

namespace chelonia::shepherd {

/// Byte store behind a shepherd. Besides replica bytes it keeps the
/// shepherd's replica table so a restarted shepherd finds its records.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string name() const = 0;
  virtual std::uint64_t capacity() const = 0;
  virtual std::uint64_t used() const = 0;

  /// Throws Error(insufficient-space) or Error(backend-failure).
  virtual void write(const std::string& ref, const Bytes& data) = 0;
  /// Throws Error(backend-failure) when `ref` is missing.
  virtual Bytes read(const std::string& ref) const = 0;
  virtual void remove(const std::string& ref) = 0;
  virtual bool exists(const std::string& ref) const = 0;
  virtual std::vector<std::string> list() const = 0;

  virtual void saveIndex(const Value& index) = 0;
  virtual Value loadIndex() const = 0;

  /// Fault injection: flips one bit of a stored replica.
  virtual void flipBit(const std::string& ref, std::size_t bit) = 0;
};

class MemoryBackend final : public Backend {
 public:
  explicit MemoryBackend(std::uint64_t capacity) : capacity_(capacity) {}

  std::string name() const override { return "memory"; }
  std::uint64_t capacity() const override { return capacity_; }
  std::uint64_t used() const override;

  void write(const std::string& ref, const Bytes& data) override;
  Bytes read(const std::string& ref) const override;
  void remove(const std::string& ref) override;
  bool exists(const std::string& ref) const override;
  std::vector<std::string> list() const override;

  void saveIndex(const Value& index) override;
  Value loadIndex() const override;

  void flipBit(const std::string& ref, std::size_t bit) override;

 private:
  std::uint64_t capacity_;
  mutable std::mutex mu_;
  std::map<std::string, Bytes> blobs_;
  Value index_;
};

/// One file per replica under `dir`, plus index.json.
class FileBackend final : public Backend {
 public:
  FileBackend(std::filesystem::path dir, std::uint64_t capacity);

  std::string name() const override { return "filesystem"; }
  std::uint64_t capacity() const override { return capacity_; }
  std::uint64_t used() const override;

  void write(const std::string& ref, const Bytes& data) override;
  Bytes read(const std::string& ref) const override;
  void remove(const std::string& ref) override;
  bool exists(const std::string& ref) const override;
  std::vector<std::string> list() const override;

  void saveIndex(const Value& index) override;
  Value loadIndex() const override;

  void flipBit(const std::string& ref, std::size_t bit) override;

 private:
  std::filesystem::path pathFor(const std::string& ref) const;

  std::filesystem::path dir_;
  std::uint64_t capacity_;
  mutable std::mutex mu_;
};

}  // namespace chelonia::shepherd
