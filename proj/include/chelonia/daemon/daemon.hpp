#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "chelonia/core/config.hpp"

namespace chelonia::daemon {

/// One node process: a Host on the socket transport running any of the
/// four services, configured from a file such as
///
///     [node]
///     name = node1
///     bind = 127.0.0.1
///     port = 7001
///     transferPort = 7002
///     dn = CN=node1
///     secret = ...
///     dataDir = /var/lib/chelonia/node1
///
///     [identity]           (repeatable: credentials accepted from callers)
///     dn = CN=node2
///     secret = ...
///
///     [ahash] [librarian] [bartender] [shepherd]   (each optional)
///
/// In URL lists the word `self` stands for this node's own endpoint of the
/// service in question, which lets a single node run with port 0.
class Daemon {
 public:
  explicit Daemon(const Config& config);
  ~Daemon();

  Daemon(const Daemon&) = delete;
  Daemon& operator=(const Daemon&) = delete;

  void start();
  void stop();

  std::uint16_t port() const;
  std::uint16_t transferPort() const;
  /// Endpoint of a hosted service, e.g. url("Bartender").
  std::string url(const std::string& service) const;
  std::vector<std::string> services() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace chelonia::daemon
