#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "chelonia/hed/host.hpp"
#include "chelonia/hed/runtime.hpp"
#include "chelonia/hed/transport.hpp"

namespace chelonia::hed {

struct NetworkProfile {
  double latency = 0.0002;    // seconds per message
  double bandwidth = 125e6;   // bytes per second

  static NetworkProfile lan() { return {0.0002, 125e6}; }
  static NetworkProfile wan() { return {0.015, 12.5e6}; }
};

struct SimHostOptions {
  WorkerPoolConfig pool{};
  double processingTime = 0.0005;  // worker time per dispatched request
};

/// Deterministic in-process transport and discrete-event clock.
///
/// Each event runs to completion on the calling thread. Inside an event the
/// clock is a cursor that RPCs push forward: a call costs latency plus
/// payload/bandwidth each way, waits for a free worker on the target host,
/// and runs the handler at the time the worker becomes available. Events
/// fire in (time, insertion order), so a (scenario, seed) pair always
/// replays to the same statistics.
class SimNetwork final : public Transport, public Runtime {
 public:
  explicit SimNetwork(std::uint64_t seed = 1);
  ~SimNetwork() override;

  Host& addHost(const std::string& name, SimHostOptions options = {});
  Host& host(const std::string& name);
  bool hasHost(const std::string& name) const;
  static std::string baseURL(const std::string& hostName) { return "sim://" + hostName; }
  static std::string transferURL(const std::string& hostName) { return "simx://" + hostName; }

  void setSimulatedNetwork(double latency, double bandwidth);
  void setProfile(const NetworkProfile& profile) { setSimulatedNetwork(profile.latency, profile.bandwidth); }
  NetworkProfile profile() const { return profile_; }

  void setRpcTimeout(double seconds) { rpcTimeout_ = seconds; }
  double rpcTimeout() const { return rpcTimeout_; }

  /// A down host drops every message addressed to it; callers see
  /// transport-failure after the RPC timeout.
  void setHostDown(const std::string& name, bool down);
  bool isHostDown(const std::string& name) const;

  /// Hosts in different groups cannot exchange messages. Hosts not listed
  /// reach everyone.
  void setPartition(const std::vector<std::vector<std::string>>& groups);
  void healPartition();
  bool connected(const std::string& a, const std::string& b) const;

  // Runtime
  double now() const override { return cursor_; }
  TimerId schedule(double delay, std::function<void()> fn) override;
  void cancel(TimerId id) override;
  std::uint64_t randomU64() override { return rng_(); }
  void randomBytes(std::span<std::uint8_t> out) override;
  void busy(double seconds) override { cursor_ += seconds; }
  void sleep(double seconds) override { cursor_ += seconds; }

  // Event loop
  bool step();
  void runUntil(double time);
  void runFor(double duration) { runUntil(std::max(loopTime_, cursor_) + duration); }
  double loopTime() const { return loopTime_; }
  std::size_t pendingEvents() const { return queue_.size(); }

  // Transport
  Response call(const RequestEnvelope& env) override;
  void upload(const std::string& url, const Bytes& body) override;
  Bytes download(const std::string& url) override;
  TransportStats stats() const override { return stats_; }
  void resetStats() override;

 private:
  struct HostState {
    std::unique_ptr<Host> host;
    SimHostOptions options;
    std::vector<double> freeAt;
    std::vector<std::pair<double, double>> waiting;  // (arrival, start)
    bool down = false;
    int group = -1;
  };

  struct Event {
    double time;
    std::uint64_t seq;
    TimerId id;
    std::function<void()> fn;
  };

  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  void deliver(std::size_t bytes);
  HostState& stateFor(const std::string& hostName);
  HostState* reachable(const std::string& origin, const std::string& hostName);

  std::mt19937_64 rng_;
  NetworkProfile profile_;
  double rpcTimeout_ = 1.0;
  double cursor_ = 0.0;
  double loopTime_ = 0.0;
  std::uint64_t nextSeq_ = 0;
  TimerId nextTimer_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::unordered_set<TimerId> cancelled_;
  std::map<std::string, HostState> hosts_;
  TransportStats stats_;
};

}  // namespace chelonia::hed
