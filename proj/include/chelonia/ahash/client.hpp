#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "chelonia/ahash/store.hpp"
#include "chelonia/hed/transport.hpp"

namespace chelonia::ahash {

struct ChangeOutcome {
  ChangeResults results;
  std::uint64_t seq = 0;

  bool applied(const std::string& changeID) const;
  bool allApplied() const;
};

/// Caller side of the replicated store. The full node list is fetched
/// from the seed endpoints on first use and refreshed whenever a node stops
/// answering. Reads go to one sticky replica, writes to the master (found
/// by following not-master hints). Reads never return state older than
/// this client's own last write.
///
/// Fails fast with ahash-unavailable when no master exists; callers retry
/// later rather than blocking inside a handler.
class AHashClient {
 public:
  AHashClient(hed::RpcClient rpc, std::vector<std::string> seedURLs);

  std::map<std::string, Object> get(const std::vector<std::string>& ids);
  Object get(const std::string& id);

  ChangeOutcome change(const ChangeBatch& batch);

  std::vector<std::string> nodeURLs() const;
  void refreshNodeList();

  std::string masterHint() const;

 private:
  std::vector<std::string> candidates(const std::string& first) const;
  void noteFailure(const std::string& url);
  void ensureNodeList();

  hed::RpcClient rpc_;
  std::vector<std::string> seeds_;
  mutable std::mutex mu_;
  std::vector<std::string> nodes_;
  std::string master_;
  std::string reader_;
  std::uint64_t lastWritten_ = 0;
  bool listFetched_ = false;
};

}  // namespace chelonia::ahash
