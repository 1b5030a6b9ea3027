#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace chelonia::hed {

/// scheme://host[:port]/ServiceName plus the identity the service runs as.
struct ServiceEndpoint {
  std::string url;
  std::string dn;

  friend bool operator==(const ServiceEndpoint&, const ServiceEndpoint&) = default;
};

struct ParsedUrl {
  std::string scheme;
  std::string host;  // includes ":port" when present
  std::string path;  // without the leading '/'
};

/// Throws Error(bad-request) when `url` is not scheme://authority/path.
ParsedUrl parseUrl(std::string_view url);

struct RequestEnvelope {
  std::string requestID;
  std::string callerDN;
  std::string callerSecret;  // socket transport only
  std::string origin;        // calling host name; empty for external clients
  ServiceEndpoint target;
  std::string operation;
  std::string payload;

  std::size_t payloadSize() const { return payload.size(); }
};

struct Response {
  bool ok = false;
  std::string payload;  // encoded result, or encoded {code, message, detail}
};

struct TransportStats {
  std::uint64_t messageCount = 0;
  std::uint64_t bytesSent = 0;
  double simulatedLatency = 0.0;  // configured per-message latency
  double virtualDelay = 0.0;      // accumulated delivery time

  TransportStats operator-(const TransportStats& earlier) const {
    return {messageCount - earlier.messageCount, bytesSent - earlier.bytesSent, simulatedLatency,
            virtualDelay - earlier.virtualDelay};
  }
};

struct WorkerPoolConfig {
  std::size_t maxConcurrent = 16;
  std::size_t queueCapacity = 1024;
};

}  // namespace chelonia::hed
