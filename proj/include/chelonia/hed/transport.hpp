#pragma once

#include <atomic>
#include <string>
#include <string_view>

#include "chelonia/core/wire.hpp"
#include "chelonia/hed/envelope.hpp"

namespace chelonia::hed {

/// Moves request envelopes to hosts and one-time transfers to storage nodes.
/// Every completed call counts exactly two messages: request and response.
class Transport {
 public:
  virtual ~Transport() = default;

  /// Throws Error(unknown-target) or Error(transport-failure); service
  /// errors come back inside the Response.
  virtual Response call(const RequestEnvelope& env) = 0;

  virtual void upload(const std::string& url, const Bytes& body) = 0;
  virtual Bytes download(const std::string& url) = 0;

  virtual TransportStats stats() const = 0;
  virtual void resetStats() = 0;
};

/// Typed calling side bound to one identity.
class RpcClient {
 public:
  RpcClient(Transport& transport, std::string dn, std::string secret = {}, std::string origin = {})
      : transport_(&transport), dn_(std::move(dn)), secret_(std::move(secret)), origin_(std::move(origin)) {}

  /// Throws the remote Error on failure.
  Value call(const std::string& targetURL, std::string_view operation, const Value& args = Value::object()) const;

  void upload(const std::string& url, const Bytes& body) const { transport_->upload(url, body); }
  Bytes download(const std::string& url) const { return transport_->download(url); }

  Transport& transport() const { return *transport_; }
  const std::string& dn() const { return dn_; }

 private:
  Transport* transport_;
  std::string dn_;
  std::string secret_;
  std::string origin_;
};

}  // namespace chelonia::hed
