#pragma once

#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "chelonia/core/errors.hpp"
#include "chelonia/hed/transport.hpp"

namespace chelonia::hed {

// Errors that mean "this instance did not answer", as opposed to an
// answer that happens to be an error.
bool unreachable(const Error& e);

/// Calls one of several equivalent service instances. Sticks to the last
/// instance that answered and moves on when it stops answering.
class FailoverClient {
 public:
  FailoverClient(RpcClient rpc, std::vector<std::string> urls, std::string_view unavailableCode);

  /// Throws the remote error, or Error(unavailableCode) when no instance
  /// answered.
  Value call(std::string_view operation, const Value& args = Value::object());

  const RpcClient& rpc() const { return rpc_; }
  std::vector<std::string> urls() const { return urls_; }

 private:
  RpcClient rpc_;
  std::vector<std::string> urls_;
  std::string unavailable_;
  std::mutex mu_;
  std::size_t preferred_ = 0;
};

}  // namespace chelonia::hed
