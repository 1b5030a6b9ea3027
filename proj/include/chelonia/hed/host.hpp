#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "chelonia/core/wire.hpp"
#include "chelonia/hed/envelope.hpp"

namespace chelonia::hed {

struct CallContext {
  std::string requestID;
  std::string callerDN;
  std::string operation;
  Value args;
};

using Handler = std::function<Value(const CallContext&)>;

/// Receiving side of the one-time transfer URLs a storage node hands out.
struct TransferHandler {
  std::function<void(const std::string& token, const Bytes& body)> upload;
  std::function<Bytes(const std::string& token)> download;
};

/// A service container. Hosts services under unique names, routes request
/// envelopes to them and enforces each service's trusted-DN list. Worker
/// pools live in the transports, which decide when a dispatch may run.
class Host {
 public:
  Host(std::string name, std::string baseURL, WorkerPoolConfig pool = {});

  const std::string& name() const { return name_; }
  const std::string& baseURL() const { return baseURL_; }
  /// For servers that learn their port only once listening; call before
  /// registering services.
  void setBaseURL(std::string url) { baseURL_ = std::move(url); }
  const WorkerPoolConfig& pool() const { return pool_; }

  /// Throws Error(duplicate-name) if `name` is already hosted.
  ServiceEndpoint registerService(const std::string& name, Handler handler, std::string dn);
  void unregisterService(const std::string& name);

  /// Inter-service calls are allowed only from these DNs. An empty list
  /// denies every inter-service call.
  void setTrustedDNs(const std::string& service, std::vector<std::string> dns);

  /// Operations that skip the trust check (client-facing entry points).
  void setPublicOperations(const std::string& service, std::set<std::string> ops);

  /// Shared secrets for DNs arriving over the socket transport.
  void setIdentitySecrets(std::map<std::string, std::string> secrets);

  bool checkTrust(const std::string& callerDN, const ServiceEndpoint& target) const;

  bool hosts(const std::string& service) const;
  std::optional<ServiceEndpoint> endpoint(const std::string& service) const;
  std::vector<std::string> services() const;

  /// Runs the handler for `env` and packs the result (or the error) into a
  /// response. Never throws.
  Response dispatch(const RequestEnvelope& env) const;

  void setTransferHandler(TransferHandler handler);
  std::optional<TransferHandler> transferHandler() const;

 private:
  struct Entry {
    Handler handler;
    ServiceEndpoint endpoint;
    std::set<std::string> trusted;
    std::set<std::string> publicOps;
  };

  bool authenticated(const RequestEnvelope& env) const;

  std::string name_;
  std::string baseURL_;
  WorkerPoolConfig pool_;
  mutable std::mutex mu_;
  std::map<std::string, Entry> services_;
  std::map<std::string, std::string> secrets_;
  std::optional<TransferHandler> transfer_;
};

Response errorResponse(std::string_view code, const std::string& message, const Value& detail = nullptr);

/// Decodes a response payload; throws the carried Error when !ok.
Value unpack(const Response& response);

}  // namespace chelonia::hed
