#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <thread>

#include "chelonia/hed/host.hpp"

namespace httplib {
class Server;
}

namespace chelonia::hed {

/// HTTP endpoint for one-time transfer URLs: PUT /<token> uploads, GET
/// /<token> downloads. Errors carry their code in X-Error-Code.
class TransferServer {
 public:
  TransferServer(Host& host, std::string bindAddress, std::uint16_t port);
  ~TransferServer();

  TransferServer(const TransferServer&) = delete;
  TransferServer& operator=(const TransferServer&) = delete;

  void start();
  void stop();
  std::uint16_t port() const { return port_; }

 private:
  Host& host_;
  std::string bindAddress_;
  std::uint16_t port_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace chelonia::hed
