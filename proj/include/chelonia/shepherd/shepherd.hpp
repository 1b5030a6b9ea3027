#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "chelonia/hed/failover.hpp"
#include "chelonia/hed/host.hpp"
#include "chelonia/hed/runtime.hpp"
#include "chelonia/librarian/metadata.hpp"
#include "chelonia/shepherd/backend.hpp"

namespace chelonia::shepherd {

struct ShepherdConfig {
  std::string serviceURL;    // this shepherd's own endpoint, as registered
  std::string transferBase;  // ticket URLs are transferBase + "/" + token
  std::vector<std::string> librarianURLs;
  std::vector<std::string> bartenderURLs;
  double heartbeatPeriod = 60.0;
  double checkPeriod = 60.0;
  double firstCheckDelay = -1.0;  // negative: one check period
  double ticketTTL = 300.0;
};

struct ReplicaRecord {
  std::string referenceID;
  std::string guid;
  std::string state;
  std::string checksum;
  std::string checksumType;
  std::uint64_t size = 0;
  double since = 0;  // time of the last state change
};

struct Ticket {
  bool upload = false;
  std::string referenceID;
  double issuedAt = 0;
  double ttl = 0;
};

/// Storage-node service. Owns replica bytes and their lifecycle:
///
///     CREATING -> ALIVE | INVALID
///     ALIVE    -> INVALID | THIRDWHEEL
///     THIRDWHEEL, INVALID -> deleted
///
/// (OFFLINE is set by a librarian, never by the shepherd itself.) Every
/// change is queued for the next heartbeat report.
class Shepherd {
 public:
  Shepherd(hed::Runtime& runtime, hed::RpcClient rpc, Backend& backend, ShepherdConfig config);
  ~Shepherd();

  Shepherd(const Shepherd&) = delete;
  Shepherd& operator=(const Shepherd&) = delete;

  /// Reloads the replica table, revalidates every replica and reports
  /// all of them with the first heartbeat.
  void start();
  void stop();

  // Operations any caller may use.
  static std::set<std::string> publicOperations() { return {"usage"}; }

  Value handle(const hed::CallContext& ctx);
  hed::TransferHandler transferHandler();

  struct PutResult {
    std::string referenceID;
    std::string url;
  };
  PutResult put(const std::string& guid, std::uint64_t size, const std::string& checksum,
                const std::string& checksumType, const std::string& claim);
  std::string get(const std::string& guid);
  void drop(const std::string& guid);

  void upload(const std::string& token, const Bytes& body);
  Bytes download(const std::string& token);
  std::string onUploadComplete(const std::string& referenceID);

  /// One maintenance pass; returns a line per action taken.
  std::vector<std::string> selfCheck();
  void heartbeat();

  std::vector<ReplicaRecord> records() const;
  std::uint64_t used() const;
  std::size_t pendingChanges() const;
  const ShepherdConfig& config() const { return config_; }

 private:
  struct Pending {
    std::string guid;
    std::string state;
    std::uint64_t generation;
  };

  std::string issueTicket(bool upload, const std::string& ref);
  Ticket redeem(const std::string& token, bool upload);
  void checkGuids(const std::set<std::string>& guids, std::vector<std::string>& actions);
  void repair(const std::string& guid, const std::string& ref, std::size_t missing, std::vector<std::string>& actions);
  bool retiresHere(const librarian::Metadata& m);
  std::uint64_t aliveCount() const;
  bool markSurplus(const std::string& guid, const std::string& ref, const std::string& claim);
  void scheduleCheck(const std::string& guid);

  // Callers hold mu_.
  void setStateLocked(ReplicaRecord& rec, std::string_view state);
  void eraseLocked(const std::string& ref);
  void queueLocked(const std::string& ref, const std::string& guid, std::string_view state);
  void saveLocked();
  bool verifyLocked(const ReplicaRecord& rec) const;

  hed::Runtime& runtime_;
  hed::RpcClient rpc_;
  Backend& backend_;
  ShepherdConfig config_;
  hed::FailoverClient librarian_;
  std::optional<hed::FailoverClient> bartender_;

  mutable std::mutex mu_;
  std::mutex reportMu_;
  std::map<std::string, ReplicaRecord> records_;
  std::map<std::string, Ticket> tickets_;
  std::map<std::string, Pending> pending_;
  std::uint64_t generation_ = 0;
  std::unique_ptr<hed::PeriodicTask> heartbeatTask_;
  std::unique_ptr<hed::PeriodicTask> checkTask_;
  std::shared_ptr<int> alive_ = std::make_shared<int>(0);
};

}  // namespace chelonia::shepherd
