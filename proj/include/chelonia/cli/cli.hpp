#pragma once

#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "chelonia/core/config.hpp"
#include "chelonia/hed/runtime.hpp"
#include "chelonia/hed/transport.hpp"

namespace chelonia::cli {

inline constexpr const char* kConfigEnv = "CHELONIA_CONFIG";

struct ClientConfig {
  std::vector<std::string> bartenderURLs;
  int defaultNeededReplicas = 1;
  std::string identityDN;
  std::string secret;
  int attempts = 5;
  double backoff = 0.5;  // doubles after every failed attempt

  /// Reads the [client] section. Throws bad-request on violated invariants.
  static ClientConfig fromConfig(const Config& config);
  static ClientConfig load(const std::filesystem::path& path);
};

/// Bartender access with failover across the configured URLs and bounded
/// retries when every bartender is overloaded or unreachable.
class Client {
 public:
  Client(hed::Transport& transport, hed::Runtime& runtime, ClientConfig config);

  Value call(const std::string& operation, const Value& args);

  void upload(const std::string& url, const Bytes& body) const { rpc_.upload(url, body); }
  Bytes download(const std::string& url) const { return rpc_.download(url); }

  /// URL schemes the transport can fetch; other external URLs are printed.
  void setHandledSchemes(std::set<std::string> schemes) { schemes_ = std::move(schemes); }
  bool handles(const std::string& url) const;

  const ClientConfig& config() const { return config_; }
  int retries() const { return retries_; }

 private:
  hed::RpcClient rpc_;
  hed::Runtime& runtime_;
  ClientConfig config_;
  std::size_t preferred_ = 0;
  std::set<std::string> schemes_;
  int retries_ = 0;
};

/// 0 ok, 1 user error, 2 system error.
int exitCodeFor(const std::string& errorCode);

/// Runs one command (`args` excludes the program name). Results go to
/// `out`, one record per line; failures go to `err` as
/// "error <code> <message>".
int run(const std::vector<std::string>& args, Client& client, std::ostream& out, std::ostream& err);

}  // namespace chelonia::cli
