#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "chelonia/ahash/client.hpp"
#include "chelonia/hed/host.hpp"
#include "chelonia/hed/runtime.hpp"
#include "chelonia/librarian/metadata.hpp"

namespace chelonia::librarian {

struct LibrarianConfig {
  std::vector<std::string> ahashURLs;
  double heartbeatPeriod = 60.0;
  double grace = 60.0;  // one missed heartbeat
  double monitorPeriod = 30.0;
  double nodeListRefresh = 60.0;
  int ahashAttempts = 3;
  double ahashRetryDelay = 1.0;
};

struct PathElement {
  std::string name;
  std::string guid;
  EntryType type;
  Policy policy;
  std::string mountURL;
};

struct TraverseResult {
  std::vector<PathElement> path;  // root first
  std::string remainder;          // unresolved suffix, no leading '/'
  ahash::Object metadata;         // full terminal entry, only when resolved

  bool resolved() const { return remainder.empty(); }
  const PathElement& terminal() const { return path.back(); }
};

Value toValue(const TraverseResult& r);
TraverseResult traverseFromValue(const Value& v);

struct ReplicaChange {
  std::string referenceID;
  std::string guid;
  std::string state;
};

struct ShepherdInfo {
  std::string url;
  std::string dn;
  double lastHeartbeat = 0;
  double deadline = 0;
  bool offline = false;
  bool alive = false;
};

/// Namespace and metadata service. Keeps no state of its own beyond the
/// A-Hash node list: entries, heartbeats and the shepherd registry all
/// live in the A-Hash, so any number of librarians can share one store.
class Librarian {
 public:
  Librarian(hed::Runtime& runtime, hed::RpcClient ahashRpc, LibrarianConfig config);
  ~Librarian();

  Librarian(const Librarian&) = delete;
  Librarian& operator=(const Librarian&) = delete;

  void start();
  void stop();

  Value handle(const hed::CallContext& ctx);

  TraverseResult traverseLN(const std::string& ln);
  std::string newEntry(const Value& tmpl);
  std::map<std::string, ahash::Object> getMetadata(const std::vector<std::string>& guids);
  ahash::ChangeResults modifyMetadata(const ahash::ChangeBatch& batch);
  Value report(const std::string& shepherdURL, const std::string& callerDN, const std::vector<ReplicaChange>& changes);
  std::vector<ShepherdInfo> listShepherds();

  /// Marks the locations of late shepherds OFFLINE and returns their URLs.
  std::vector<std::string> checkShepherds();

  ahash::AHashClient& ahash() { return ahash_; }

 private:
  template <typename F>
  auto withRetry(F&& fn) -> decltype(fn());

  void ensureRoot();

  hed::Runtime& runtime_;
  LibrarianConfig config_;
  ahash::AHashClient ahash_;
  std::unique_ptr<hed::PeriodicTask> monitor_;
  std::unique_ptr<hed::PeriodicTask> refresher_;
};

}  // namespace chelonia::librarian
