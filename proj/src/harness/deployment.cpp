#include "chelonia/harness/deployment.hpp"

#include "chelonia/core/errors.hpp"

namespace chelonia::harness {

namespace {

constexpr const char* kAHash = "AHash";
constexpr const char* kLibrarian = "Librarian";
constexpr const char* kBartender = "Bartender";
constexpr const char* kShepherd = "Shepherd";

std::vector<std::string> concat(std::initializer_list<const std::vector<std::string>*> lists) {
  std::vector<std::string> out;
  for (const auto* l : lists) out.insert(out.end(), l->begin(), l->end());
  return out;
}

// Registers `service` on `host`, forwarding to whatever object `slot`
// holds at call time.
template <typename T>
void attach(hed::Host& host, const char* service, std::unique_ptr<T>& slot, const std::string& dn) {
  host.registerService(
      service,
      [&slot, name = host.name()](const hed::CallContext& ctx) -> Value {
        if (!slot) throw Error(errc::kNodeDown, name);
        return slot->handle(ctx);
      },
      dn);
}

}  // namespace

Deployment::Deployment(Topology topology, std::uint64_t seed) : topology_(std::move(topology)), net_(seed) {
  net_.setProfile(topology_.profile);
  const auto& t = topology_;
  hed::SimHostOptions plain{{1000, 100000}, t.processingTime};
  hed::SimHostOptions front{t.bartenderPool, t.processingTime};

  for (int i = 0; i < t.ahashNodes; ++i) {
    auto h = ahashHost(i);
    ahashURLs_.push_back(hed::SimNetwork::baseURL(h) + "/" + kAHash);
    ahashDNs_.push_back("CN=ahash-" + h);
    peers_.push_back({h, ahashURLs_.back(), ahashDNs_.back()});
  }
  for (int i = 0; i < t.librarians; ++i) {
    librarianURLs_.push_back(hed::SimNetwork::baseURL(librarianHost(i)) + "/" + kLibrarian);
    librarianDNs_.push_back("CN=librarian-" + librarianHost(i));
  }
  for (int i = 0; i < t.bartenders; ++i) {
    bartenderURLs_.push_back(hed::SimNetwork::baseURL(bartenderHost(i)) + "/" + kBartender);
    bartenderDNs_.push_back("CN=bartender-" + bartenderHost(i));
  }
  for (int i = 0; i < t.shepherds; ++i) {
    shepherdURLs_.push_back(hed::SimNetwork::baseURL(shepherdHost(i)) + "/" + kShepherd);
    shepherdDNs_.push_back("CN=shepherd-" + shepherdHost(i));
  }

  const std::vector<std::string> users{kUserDN};
  logs_.resize(t.ahashNodes);
  ahash_.resize(t.ahashNodes);
  for (int i = 0; i < t.ahashNodes; ++i) {
    logs_[i] = std::make_unique<ahash::MemoryLogStore>();
    auto& host = net_.addHost(ahashHost(i), plain);
    attach(host, kAHash, ahash_[i], ahashDNs_[i]);
    // The harness reads the store directly, and the bench drives it as a
    // plain client.
    host.setTrustedDNs(kAHash, concat({&ahashDNs_, &librarianDNs_, &users}));
  }
  librarians_.resize(t.librarians);
  for (int i = 0; i < t.librarians; ++i) {
    auto& host = net_.addHost(librarianHost(i), plain);
    attach(host, kLibrarian, librarians_[i], librarianDNs_[i]);
    host.setTrustedDNs(kLibrarian, concat({&bartenderDNs_, &shepherdDNs_}));
  }
  bartenders_.resize(t.bartenders);
  for (int i = 0; i < t.bartenders; ++i) {
    auto& host = net_.addHost(bartenderHost(i), front);
    attach(host, kBartender, bartenders_[i], bartenderDNs_[i]);
    host.setTrustedDNs(kBartender, shepherdDNs_);
    host.setPublicOperations(kBartender, bartender::Bartender::publicOperations());
  }
  backends_.resize(t.shepherds);
  shepherds_.resize(t.shepherds);
  for (int i = 0; i < t.shepherds; ++i) {
    backends_[i] = std::make_unique<shepherd::MemoryBackend>(t.shepherdCapacity);
    auto& host = net_.addHost(shepherdHost(i), plain);
    attach(host, kShepherd, shepherds_[i], shepherdDNs_[i]);
    host.setTrustedDNs(kShepherd, bartenderDNs_);
    host.setPublicOperations(kShepherd, shepherd::Shepherd::publicOperations());
    host.setTransferHandler({[this, i](const std::string& token, const Bytes& body) {
                               if (!shepherds_[i]) throw Error(errc::kNodeDown, shepherdHost(i));
                               shepherds_[i]->upload(token, body);
                             },
                             [this, i](const std::string& token) {
                               if (!shepherds_[i]) throw Error(errc::kNodeDown, shepherdHost(i));
                               return shepherds_[i]->download(token);
                             }});
  }
}

Deployment::~Deployment() {
  // Services first: their timers reference the network.
  shepherds_.clear();
  bartenders_.clear();
  librarians_.clear();
  ahash_.clear();
}

void Deployment::startAHash(int i) {
  ahash::NodeConfig cfg;
  cfg.nodeID = peers_[i].id;
  cfg.peers = peers_;
  cfg.masterTimeout = topology_.masterTimeout;
  cfg.pingInterval = topology_.pingInterval;
  ahash_[i] = std::make_unique<ahash::AHashNode>(net_, hed::RpcClient(net_, ahashDNs_[i], {}, ahashHost(i)), *logs_[i], cfg);
  net_.setHostDown(ahashHost(i), false);
  ahash_[i]->start();
}

void Deployment::killAHash(int i) {
  ahash_[i].reset();
  net_.setHostDown(ahashHost(i), true);
}

void Deployment::startLibrarian(int i) {
  librarian::LibrarianConfig cfg;
  cfg.ahashURLs = ahashURLs_;
  cfg.heartbeatPeriod = topology_.heartbeatPeriod;
  cfg.grace = topology_.grace;
  cfg.monitorPeriod = topology_.monitorPeriod;
  net_.setHostDown(librarianHost(i), false);
  librarians_[i] = std::make_unique<librarian::Librarian>(
      net_, hed::RpcClient(net_, librarianDNs_[i], {}, librarianHost(i)), cfg);
  librarians_[i]->start();
}

void Deployment::killLibrarian(int i) {
  librarians_[i].reset();
  net_.setHostDown(librarianHost(i), true);
}

void Deployment::startBartender(int i) {
  bartender::BartenderConfig cfg;
  cfg.librarianURLs = librarianURLs_;
  cfg.defaultNeededReplicas = topology_.defaultNeededReplicas;
  net_.setHostDown(bartenderHost(i), false);
  bartenders_[i] = std::make_unique<bartender::Bartender>(
      net_, hed::RpcClient(net_, bartenderDNs_[i], {}, bartenderHost(i)), cfg);
}

void Deployment::killBartender(int i) {
  bartenders_[i].reset();
  net_.setHostDown(bartenderHost(i), true);
}

void Deployment::startShepherd(int i) {
  shepherd::ShepherdConfig cfg;
  cfg.serviceURL = shepherdURLs_[i];
  cfg.transferBase = hed::SimNetwork::transferURL(shepherdHost(i));
  cfg.librarianURLs = librarianURLs_;
  cfg.bartenderURLs = bartenderURLs_;
  cfg.heartbeatPeriod = topology_.heartbeatPeriod;
  cfg.checkPeriod = topology_.checkPeriod;
  cfg.ticketTTL = topology_.ticketTTL;
  if (static_cast<std::size_t>(i) < topology_.firstCheckDelays.size()) cfg.firstCheckDelay = topology_.firstCheckDelays[i];
  net_.setHostDown(shepherdHost(i), false);
  shepherds_[i] = std::make_unique<shepherd::Shepherd>(
      net_, hed::RpcClient(net_, shepherdDNs_[i], {}, shepherdHost(i)), *backends_[i], cfg);
  shepherds_[i]->start();
}

void Deployment::killShepherd(int i) {
  shepherds_[i].reset();
  net_.setHostDown(shepherdHost(i), true);
}

int Deployment::shepherdIndex(const std::string& url) const {
  for (std::size_t i = 0; i < shepherdURLs_.size(); ++i) {
    if (shepherdURLs_[i] == url) return static_cast<int>(i);
  }
  return -1;
}

void Deployment::start() {
  for (int i = 0; i < topology_.ahashNodes; ++i) startAHash(i);
  if (awaitMaster() < 0) throw Error(errc::kNoMaster, "A-Hash did not elect a master");
  for (int i = 0; i < topology_.librarians; ++i) startLibrarian(i);
  for (int i = 0; i < topology_.bartenders; ++i) startBartender(i);
  for (int i = 0; i < topology_.shepherds; ++i) startShepherd(i);
  net_.runFor(0.1);
}

int Deployment::ahashMaster() const {
  int found = -1;
  for (std::size_t i = 0; i < ahash_.size(); ++i) {
    if (ahash_[i] && ahash_[i]->isActingMaster()) {
      if (found >= 0) throw Error(errc::kNoMajority, "two acting masters");
      found = static_cast<int>(i);
    }
  }
  return found;
}

int Deployment::awaitMaster(double limit) {
  double end = net_.loopTime() + limit;
  for (;;) {
    int m = ahashMaster();
    if (m >= 0 || net_.loopTime() >= end) return m;
    net_.runFor(0.25);
  }
}

ahash::Store Deployment::store() const {
  const ahash::AHashNode* best = nullptr;
  int m = ahashMaster();
  if (m >= 0) return ahash_[m]->storeCopy();
  for (const auto& n : ahash_) {
    if (n && (!best || n->lastAppliedSeq() > best->lastAppliedSeq())) best = n.get();
  }
  if (!best) throw Error(errc::kAHashUnavailable, "no live A-Hash replica");
  return best->storeCopy();
}

}  // namespace chelonia::harness
