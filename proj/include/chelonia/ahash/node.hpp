#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "chelonia/ahash/log_store.hpp"
#include "chelonia/ahash/store.hpp"
#include "chelonia/hed/host.hpp"
#include "chelonia/hed/runtime.hpp"
#include "chelonia/hed/transport.hpp"

namespace chelonia::ahash {

// Object holding the replicated membership list: section "nodes" maps
// node id to URL, section "dns" maps node id to DN.
inline constexpr const char* kNodeListID = "ahash-list";

struct Peer {
  std::string id;
  std::string url;
  std::string dn;
};

enum class Role { kMaster, kClient, kCandidate };
const char* roleName(Role r);

struct NodeConfig {
  std::string nodeID;
  std::vector<Peer> peers;  // initial membership, this node included
  double masterTimeout = 10.0;
  double pingInterval = 1.0;
  double tickInterval = 0.5;
  double electionBackoff = 2.0;  // upper bound of the random retry delay
  std::size_t snapshotEvery = 1000;
  std::size_t retainEntries = 2000;  // kept in memory for catch-up
};

struct NodeStatus {
  std::string nodeID;
  Role role;
  bool running;
  bool actingMaster;  // master holding a valid lease
  std::uint64_t seq;
  std::uint64_t lastTerm;
  std::uint64_t currentTerm;
  std::string masterID;
};

/// One A-Hash replica. A single master accepts writes and waits for every
/// live replica to confirm each log entry; all replicas serve reads.
///
/// Election: a replica that has not heard from a master for masterTimeout
/// polls its peers. A peer grants a poll only if it has not heard from a
/// master within masterTimeout either. With a majority of grants the
/// candidate compares (seq, lastTerm, nodeID) over everyone who answered;
/// the largest becomes master (directly, or after a nominate message) and
/// announces itself. A master holds a lease of masterTimeout/2, renewed by
/// majority ping acknowledgements, and steps down when it lapses.
class AHashNode {
 public:
  AHashNode(hed::Runtime& runtime, hed::RpcClient rpc, LogStore& log, NodeConfig config);
  ~AHashNode();

  AHashNode(const AHashNode&) = delete;
  AHashNode& operator=(const AHashNode&) = delete;

  void start();
  void stop();

  /// Service entry point for the host.
  Value handle(const hed::CallContext& ctx);

  NodeStatus status() const;
  bool isActingMaster() const;
  std::uint64_t lastAppliedSeq() const;
  std::string nodeID() const { return config_.nodeID; }

  /// Direct reads for the harness oracles; no messages involved.
  Object read(const std::string& id) const;
  std::string canonical() const;
  Store storeCopy() const;

  std::vector<Peer> peers() const;

  /// Runs one election round now.
  void startElection();

 private:
  struct PeerState {
    double lastAck = -1e300;
    bool live = false;
  };

  Value opGet(const Value& args) const;
  Value opChange(const Value& args);
  Value commit(const ChangeBatch& batch);
  Value opReplicate(const std::string& callerDN, const Value& args);
  Value opInstallSnapshot(const std::string& callerDN, const Value& args);
  Value opPing(const std::string& callerDN, const Value& args);
  Value opPoll(const Value& args);
  Value opAnnounce(const Value& args);
  Value opNominate(const Value& args);

  void tick();
  void pingRound();
  bool catchUp(const Peer& peer, std::uint64_t peerSeq, std::uint64_t peerLastTerm);
  void becomeMaster(std::uint64_t term);
  void stepDown();
  void stepDownLocked();
  void bootstrapNodeList();

  // Callers hold mu_.
  std::vector<Peer> peersLocked() const;
  std::size_t majorityLocked() const;
  bool leaseValidLocked() const;
  void appendLocked(LogEntry entry);
  std::optional<std::uint64_t> termAtLocked(std::uint64_t seq) const;
  void checkFromMasterLocked(const std::string& callerDN, std::uint64_t term, const std::string& master);
  void adoptMasterLocked(std::uint64_t term, const std::string& master);
  void persistTermsLocked();
  std::string masterURLLocked() const;
  void requireRunning() const;

  hed::Runtime& runtime_;
  hed::RpcClient rpc_;
  LogStore& log_;
  NodeConfig config_;

  mutable std::mutex mu_;
  std::mutex writeMu_;  // one writer pipeline
  bool running_ = false;
  Role role_ = Role::kClient;
  Store store_;
  std::uint64_t seq_ = 0;
  std::uint64_t lastTerm_ = 0;
  // tail_ holds the entries after baseSeq_, whose term is baseTerm_.
  std::uint64_t baseSeq_ = 0;
  std::uint64_t baseTerm_ = 0;
  std::deque<LogEntry> tail_;
  std::size_t sinceSnapshot_ = 0;
  std::uint64_t currentTerm_ = 0;
  std::uint64_t promisedTerm_ = 0;
  std::string masterID_;
  double lastHeardMaster_ = -1e300;
  double electionNotBefore_ = 0.0;
  double lastPing_ = -1e300;
  bool electing_ = false;
  std::map<std::string, PeerState> peerState_;
  std::unique_ptr<hed::PeriodicTask> ticker_;
  std::shared_ptr<int> alive_ = std::make_shared<int>(0);  // guards deferred callbacks
};

}  // namespace chelonia::ahash
