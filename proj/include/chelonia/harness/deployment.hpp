#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "chelonia/ahash/log_store.hpp"
#include "chelonia/ahash/node.hpp"
#include "chelonia/bartender/bartender.hpp"
#include "chelonia/hed/sim_network.hpp"
#include "chelonia/librarian/librarian.hpp"
#include "chelonia/shepherd/backend.hpp"
#include "chelonia/shepherd/shepherd.hpp"

namespace chelonia::harness {

inline const std::string kUserDN = "CN=user";

struct Topology {
  int ahashNodes = 1;
  int librarians = 1;
  int bartenders = 1;
  int shepherds = 0;
  std::uint64_t shepherdCapacity = 1ull << 32;
  hed::NetworkProfile profile = hed::NetworkProfile::lan();

  double masterTimeout = 10.0;
  double pingInterval = 1.0;

  double heartbeatPeriod = 60.0;
  double grace = 60.0;
  double monitorPeriod = 30.0;
  double checkPeriod = 60.0;
  std::vector<double> firstCheckDelays;  // per shepherd; default one period
  double ticketTTL = 300.0;

  int defaultNeededReplicas = 1;
  hed::WorkerPoolConfig bartenderPool{1000, 100000};
  double processingTime = 0.0005;
};

/// A complete deployment on one simulated network: hosts a0.., l0..,
/// b0.., s0.. each running one service. Services can be killed (the host
/// goes down and the service object is destroyed) and restarted over their
/// persistent parts (A-Hash logs, shepherd backends).
class Deployment {
 public:
  explicit Deployment(Topology topology, std::uint64_t seed = 1);
  ~Deployment();

  Deployment(const Deployment&) = delete;
  Deployment& operator=(const Deployment&) = delete;

  /// Starts every service and runs until the A-Hash has an acting master
  /// and every shepherd has reported once.
  void start();

  hed::SimNetwork& net() { return net_; }
  const Topology& topology() const { return topology_; }

  const std::vector<std::string>& ahashURLs() const { return ahashURLs_; }
  const std::vector<std::string>& librarianURLs() const { return librarianURLs_; }
  const std::vector<std::string>& bartenderURLs() const { return bartenderURLs_; }
  const std::vector<std::string>& shepherdURLs() const { return shepherdURLs_; }

  static std::string ahashHost(int i) { return "a" + std::to_string(i); }
  static std::string librarianHost(int i) { return "l" + std::to_string(i); }
  static std::string bartenderHost(int i) { return "b" + std::to_string(i); }
  static std::string shepherdHost(int i) { return "s" + std::to_string(i); }

  void startAHash(int i);
  void killAHash(int i);
  void startLibrarian(int i);
  void killLibrarian(int i);
  void startBartender(int i);
  void killBartender(int i);
  void startShepherd(int i);
  void killShepherd(int i);

  bool ahashUp(int i) const { return ahash_[i] != nullptr; }
  bool shepherdUp(int i) const { return shepherds_[i] != nullptr; }

  ahash::AHashNode* ahash(int i) { return ahash_[i].get(); }
  librarian::Librarian* librarian(int i) { return librarians_[i].get(); }
  bartender::Bartender* bartender(int i) { return bartenders_[i].get(); }
  shepherd::Shepherd* shepherd(int i) { return shepherds_[i].get(); }
  shepherd::MemoryBackend& backend(int i) { return *backends_[i]; }
  int shepherdIndex(const std::string& url) const;

  /// Index of the node holding a master lease, or -1.
  int ahashMaster() const;
  int awaitMaster(double limit = 60.0);

  /// Store contents of the most advanced live replica, read directly.
  ahash::Store store() const;

  /// A caller with the given identity, calling from outside every host.
  hed::RpcClient client(const std::string& dn = kUserDN) { return hed::RpcClient(net_, dn); }

 private:
  Topology topology_;
  hed::SimNetwork net_;
  std::vector<ahash::Peer> peers_;
  std::vector<std::string> ahashURLs_, librarianURLs_, bartenderURLs_, shepherdURLs_;
  std::vector<std::string> ahashDNs_, librarianDNs_, bartenderDNs_, shepherdDNs_;
  std::vector<std::unique_ptr<ahash::MemoryLogStore>> logs_;
  std::vector<std::unique_ptr<ahash::AHashNode>> ahash_;
  std::vector<std::unique_ptr<librarian::Librarian>> librarians_;
  std::vector<std::unique_ptr<bartender::Bartender>> bartenders_;
  std::vector<std::unique_ptr<shepherd::MemoryBackend>> backends_;
  std::vector<std::unique_ptr<shepherd::Shepherd>> shepherds_;
};

}  // namespace chelonia::harness
