#include "chelonia/hed/transport.hpp"

#include <atomic>

#include "chelonia/hed/host.hpp"

namespace chelonia::hed {
namespace {
std::atomic<std::uint64_t> gRequestCounter{0};
}

Value RpcClient::call(const std::string& targetURL, std::string_view operation, const Value& args) const {
  RequestEnvelope env;
  env.requestID = dn_ + "#" + std::to_string(++gRequestCounter);
  env.callerDN = dn_;
  env.callerSecret = secret_;
  env.origin = origin_;
  env.target.url = targetURL;
  env.operation = std::string(operation);
  env.payload = wire::encode(args);
  return unpack(transport_->call(env));
}

}  // namespace chelonia::hed
