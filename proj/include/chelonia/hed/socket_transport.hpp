#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "chelonia/hed/host.hpp"
#include "chelonia/hed/transport.hpp"

namespace chelonia::hed {

/// Serves one Host over TCP. Each accepted connection carries
/// length-prefixed request frames; requests run on a pool of
/// `maxConcurrent` workers and wait in a FIFO room of `queueCapacity`
/// slots. A request that finds the room full is answered with queue-full.
class SocketServer {
 public:
  SocketServer(Host& host, std::string bindAddress, std::uint16_t port);
  ~SocketServer();

  SocketServer(const SocketServer&) = delete;
  SocketServer& operator=(const SocketServer&) = delete;

  void start();
  void stop();

  std::uint16_t port() const { return port_; }

  /// Requests currently executing or queued (for tests).
  std::size_t inFlight() const;

 private:
  struct Connection;
  struct Job {
    std::shared_ptr<Connection> conn;
    RequestEnvelope env;
    std::uint64_t id;
  };

  void acceptLoop();
  void readLoop(std::shared_ptr<Connection> conn);
  void workerLoop();
  void reply(const std::shared_ptr<Connection>& conn, std::uint64_t id, const Response& response);

  Host& host_;
  std::string bindAddress_;
  std::uint16_t port_;
  int listenFd_ = -1;
  std::atomic<bool> running_{false};
  std::thread acceptThread_;
  std::vector<std::thread> workers_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Job> queue_;
  std::size_t active_ = 0;
  std::list<std::pair<std::shared_ptr<Connection>, std::thread>> connections_;
};

/// Client side of the socket transport. Keeps idle connections per
/// host:port and opens another one only when all are in use.
/// Transfer URLs (http://) are served by the storage nodes' HTTP endpoint.
class SocketTransport final : public Transport {
 public:
  explicit SocketTransport(double timeoutSeconds = 30.0);
  ~SocketTransport() override;

  Response call(const RequestEnvelope& env) override;
  void upload(const std::string& url, const Bytes& body) override;
  Bytes download(const std::string& url) override;
  TransportStats stats() const override;
  void resetStats() override;

 private:
  int connect(const std::string& hostPort) const;
  int acquire(const std::string& hostPort);
  void release(const std::string& hostPort, int fd);

  double timeout_;
  std::mutex mu_;
  std::map<std::string, std::vector<int>> idle_;
  std::atomic<std::uint64_t> messages_{0};
  std::atomic<std::uint64_t> bytes_{0};
};

/// Changes the simulated network profile; throws not-simulation-transport
/// for any other transport.
void setSimulatedNetwork(Transport& transport, double latency, double bandwidth);

}  // namespace chelonia::hed
