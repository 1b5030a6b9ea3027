#include "chelonia/hed/failover.hpp"

#include "chelonia/core/errors.hpp"

namespace chelonia::hed {

bool unreachable(const Error& e) {
  return e.is(errc::kTransportFailure) || e.is(errc::kUnknownTarget) || e.is(errc::kQueueFull) ||
         e.is(errc::kNodeDown);
}

FailoverClient::FailoverClient(RpcClient rpc, std::vector<std::string> urls, std::string_view unavailableCode)
    : rpc_(std::move(rpc)), urls_(std::move(urls)), unavailable_(unavailableCode) {
  if (urls_.empty()) throw Error(errc::kBadRequest, "no endpoints configured for " + unavailable_);
}

Value FailoverClient::call(std::string_view operation, const Value& args) {
  std::size_t start;
  {
    std::lock_guard lock(mu_);
    start = preferred_;
  }
  std::string last;
  for (std::size_t i = 0; i < urls_.size(); ++i) {
    std::size_t idx = (start + i) % urls_.size();
    try {
      Value r = rpc_.call(urls_[idx], operation, args);
      std::lock_guard lock(mu_);
      preferred_ = idx;
      return r;
    } catch (const Error& e) {
      if (!unreachable(e)) throw;
      last = e.what();
    }
  }
  throw Error(unavailable_, last);
}

}  // namespace chelonia::hed
