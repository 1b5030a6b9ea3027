#include "chelonia/daemon/daemon.hpp"

#include <map>

#include "chelonia/ahash/log_store.hpp"
#include "chelonia/ahash/node.hpp"
#include "chelonia/bartender/bartender.hpp"
#include "chelonia/core/errors.hpp"
#include "chelonia/hed/host.hpp"
#include "chelonia/hed/real_runtime.hpp"
#include "chelonia/hed/socket_transport.hpp"
#include "chelonia/hed/transfer_server.hpp"
#include "chelonia/librarian/librarian.hpp"
#include "chelonia/shepherd/backend.hpp"
#include "chelonia/shepherd/shepherd.hpp"

namespace chelonia::daemon {

namespace {

std::vector<std::string> rawValues(const ConfigSection& s, const std::string& key) {
  auto it = s.values().find(key);
  return it == s.values().end() ? std::vector<std::string>{} : it->second;
}

}  // namespace

struct Daemon::Impl {
  Config config;
  const ConfigSection* node = nullptr;
  std::string bind;
  std::string dn;
  std::string secret;
  std::filesystem::path dataDir;

  hed::RealRuntime runtime;
  hed::SocketTransport transport;
  std::unique_ptr<hed::Host> host;
  std::unique_ptr<hed::SocketServer> server;
  std::unique_ptr<hed::TransferServer> transfers;

  std::unique_ptr<ahash::FileLogStore> log;
  std::unique_ptr<ahash::AHashNode> ahash;
  std::unique_ptr<librarian::Librarian> librarian;
  std::unique_ptr<bartender::Bartender> bartender;
  std::unique_ptr<shepherd::FileBackend> backend;
  std::unique_ptr<shepherd::Shepherd> shepherd;

  explicit Impl(Config c) : config(std::move(c)) {}

  std::string selfURL(const std::string& service) const { return host->baseURL() + "/" + service; }

  std::vector<std::string> urls(const ConfigSection& s, const std::string& key, const std::string& service) const {
    std::vector<std::string> out;
    for (auto& u : s.getList(key)) out.push_back(u == "self" ? selfURL(service) : u);
    return out;
  }

  hed::RpcClient rpc() { return hed::RpcClient(transport, dn, secret); }

  template <typename T>
  void attach(const std::string& service, T& impl, const ConfigSection& s) {
    host->registerService(service, [&impl](const hed::CallContext& ctx) { return impl.handle(ctx); }, dn);
    host->setTrustedDNs(service, s.getList("trust"));
  }

  void startAHash(const ConfigSection& s) {
    ahash::NodeConfig cfg;
    cfg.nodeID = s.require("id");
    for (const auto& line : rawValues(s, "peer")) {
      // peer = <id> <url> <dn>
      auto first = line.find(' ');
      auto second = line.find(' ', first + 1);
      if (first == std::string::npos || second == std::string::npos) throw Error(errc::kBadRequest, "bad peer line: " + line);
      std::string url = line.substr(first + 1, second - first - 1);
      cfg.peers.push_back({line.substr(0, first), url == "self" ? selfURL("AHash") : url, trim(line.substr(second + 1))});
    }
    if (cfg.peers.empty()) cfg.peers.push_back({cfg.nodeID, selfURL("AHash"), dn});
    cfg.masterTimeout = s.getDouble("masterTimeout", cfg.masterTimeout);
    cfg.pingInterval = s.getDouble("pingInterval", cfg.pingInterval);
    log = std::make_unique<ahash::FileLogStore>(dataDir / "ahash", s.getBool("sync", false));
    ahash = std::make_unique<ahash::AHashNode>(runtime, rpc(), *log, cfg);
    attach("AHash", *ahash, s);
    ahash->start();
  }

  void startLibrarian(const ConfigSection& s) {
    librarian::LibrarianConfig cfg;
    cfg.ahashURLs = urls(s, "ahash", "AHash");
    cfg.heartbeatPeriod = s.getDouble("heartbeatPeriod", cfg.heartbeatPeriod);
    cfg.grace = s.getDouble("grace", cfg.grace);
    cfg.monitorPeriod = s.getDouble("monitorPeriod", cfg.monitorPeriod);
    librarian = std::make_unique<librarian::Librarian>(runtime, rpc(), cfg);
    attach("Librarian", *librarian, s);
    librarian->start();
  }

  void startBartender(const ConfigSection& s) {
    bartender::BartenderConfig cfg;
    cfg.librarianURLs = urls(s, "librarian", "Librarian");
    cfg.defaultNeededReplicas = static_cast<int>(s.getInt("neededReplicas", 1));
    auto rules = rawValues(s, "rootPolicy");
    if (!rules.empty()) {
      cfg.rootPolicy.clear();
      for (const auto& r : rules) cfg.rootPolicy.push_back(librarian::PolicyRule::parse(r));
    }
    bartender = std::make_unique<bartender::Bartender>(runtime, rpc(), cfg);
    attach("Bartender", *bartender, s);
    host->setPublicOperations("Bartender", bartender::Bartender::publicOperations());
  }

  void startShepherd(const ConfigSection& s) {
    shepherd::ShepherdConfig cfg;
    cfg.serviceURL = selfURL("Shepherd");
    cfg.transferBase = "http://" + s.getString("transferHost", bind) + ":" + std::to_string(transfers->port());
    cfg.librarianURLs = urls(s, "librarian", "Librarian");
    cfg.bartenderURLs = urls(s, "bartender", "Bartender");
    cfg.heartbeatPeriod = s.getDouble("heartbeatPeriod", cfg.heartbeatPeriod);
    cfg.checkPeriod = s.getDouble("checkPeriod", cfg.checkPeriod);
    cfg.ticketTTL = s.getDouble("ticketTTL", cfg.ticketTTL);
    auto capacity = static_cast<std::uint64_t>(s.getInt("capacity", 1ll << 40));
    backend = std::make_unique<shepherd::FileBackend>(dataDir / "shepherd", capacity);
    shepherd = std::make_unique<shepherd::Shepherd>(runtime, rpc(), *backend, cfg);
    attach("Shepherd", *shepherd, s);
    host->setPublicOperations("Shepherd", shepherd::Shepherd::publicOperations());
    host->setTransferHandler(shepherd->transferHandler());
    shepherd->start();
  }
};

Daemon::Daemon(const Config& config) : impl_(std::make_unique<Impl>(config)) {
  auto& d = *impl_;
  d.node = d.config.find("node");
  if (!d.node) throw Error(errc::kBadRequest, "configuration has no [node] section");
  d.bind = d.node->getString("bind", "127.0.0.1");
  d.dn = d.node->require("dn");
  d.secret = d.node->getString("secret");
  d.dataDir = d.node->getString("dataDir", ".");
  hed::WorkerPoolConfig pool{static_cast<std::size_t>(d.node->getInt("workers", 16)),
                             static_cast<std::size_t>(d.node->getInt("queue", 1024))};
  auto port = static_cast<std::uint16_t>(d.node->getInt("port", 0));
  // The base URL is set once the port is known, in start().
  d.host = std::make_unique<hed::Host>(d.node->getString("name", "node"), "", pool);
  d.server = std::make_unique<hed::SocketServer>(*d.host, d.bind, port);
  std::map<std::string, std::string> secrets;
  if (!d.secret.empty()) secrets[d.dn] = d.secret;
  for (const auto* id : d.config.all("identity")) secrets[id->require("dn")] = id->require("secret");
  d.host->setIdentitySecrets(std::move(secrets));
}

Daemon::~Daemon() { stop(); }

void Daemon::start() {
  auto& d = *impl_;
  d.server->start();
  std::string base = "tcp://" + d.node->getString("advertise", d.bind) + ":" + std::to_string(d.server->port());
  d.host->setBaseURL(base);
  if (d.config.find("shepherd")) {
    d.transfers = std::make_unique<hed::TransferServer>(*d.host, d.bind,
                                                        static_cast<std::uint16_t>(d.node->getInt("transferPort", 0)));
    d.transfers->start();
  }
  if (const auto* s = d.config.find("ahash")) d.startAHash(*s);
  if (const auto* s = d.config.find("librarian")) d.startLibrarian(*s);
  if (const auto* s = d.config.find("bartender")) d.startBartender(*s);
  if (const auto* s = d.config.find("shepherd")) d.startShepherd(*s);
}

void Daemon::stop() {
  auto& d = *impl_;
  if (d.shepherd) d.shepherd->stop();
  if (d.librarian) d.librarian->stop();
  if (d.ahash) d.ahash->stop();
  if (d.transfers) d.transfers->stop();
  d.server->stop();
  d.runtime.stop();
  d.shepherd.reset();
  d.bartender.reset();
  d.librarian.reset();
  d.ahash.reset();
}

std::uint16_t Daemon::port() const { return impl_->server->port(); }
std::uint16_t Daemon::transferPort() const { return impl_->transfers ? impl_->transfers->port() : 0; }
std::string Daemon::url(const std::string& service) const { return impl_->selfURL(service); }
std::vector<std::string> Daemon::services() const { return impl_->host->services(); }

}  // namespace chelonia::daemon
