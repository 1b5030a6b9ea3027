#include "chelonia/hed/sim_network.hpp"

#include <algorithm>
#include <limits>

#include "chelonia/core/errors.hpp"

namespace chelonia::hed {
namespace {
constexpr double kBusy = std::numeric_limits<double>::infinity();
}

SimNetwork::SimNetwork(std::uint64_t seed) : rng_(seed) { stats_.simulatedLatency = profile_.latency; }

SimNetwork::~SimNetwork() = default;

Host& SimNetwork::addHost(const std::string& name, SimHostOptions options) {
  if (hosts_.count(name)) throw Error(errc::kDuplicateName, "host " + name);
  HostState state;
  state.host = std::make_unique<Host>(name, baseURL(name), options.pool);
  state.options = options;
  state.freeAt.assign(options.pool.maxConcurrent, 0.0);
  auto& ref = *state.host;
  hosts_.emplace(name, std::move(state));
  return ref;
}

Host& SimNetwork::host(const std::string& name) { return *stateFor(name).host; }

bool SimNetwork::hasHost(const std::string& name) const { return hosts_.count(name) > 0; }

SimNetwork::HostState& SimNetwork::stateFor(const std::string& hostName) {
  auto it = hosts_.find(hostName);
  if (it == hosts_.end()) throw Error(errc::kUnknownTarget, "no host " + hostName);
  return it->second;
}

void SimNetwork::setSimulatedNetwork(double latency, double bandwidth) {
  if (latency < 0 || bandwidth <= 0) throw Error(errc::kBadRequest, "bad network profile");
  profile_ = {latency, bandwidth};
  stats_.simulatedLatency = latency;
}

void SimNetwork::setHostDown(const std::string& name, bool down) { stateFor(name).down = down; }

bool SimNetwork::isHostDown(const std::string& name) const {
  auto it = hosts_.find(name);
  return it != hosts_.end() && it->second.down;
}

void SimNetwork::setPartition(const std::vector<std::vector<std::string>>& groups) {
  healPartition();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (const auto& name : groups[g]) stateFor(name).group = static_cast<int>(g);
  }
}

void SimNetwork::healPartition() {
  for (auto& [_, state] : hosts_) state.group = -1;
}

bool SimNetwork::connected(const std::string& a, const std::string& b) const {
  if (a.empty() || b.empty() || a == b) return true;
  auto ia = hosts_.find(a);
  auto ib = hosts_.find(b);
  if (ia == hosts_.end() || ib == hosts_.end()) return true;
  int ga = ia->second.group;
  int gb = ib->second.group;
  return ga < 0 || gb < 0 || ga == gb;
}

TimerId SimNetwork::schedule(double delay, std::function<void()> fn) {
  TimerId id = ++nextTimer_;
  queue_.push(Event{cursor_ + std::max(0.0, delay), nextSeq_++, id, std::move(fn)});
  return id;
}

void SimNetwork::cancel(TimerId id) { cancelled_.insert(id); }

void SimNetwork::randomBytes(std::span<std::uint8_t> out) {
  std::size_t i = 0;
  while (i < out.size()) {
    std::uint64_t word = rng_();
    for (int b = 0; b < 8 && i < out.size(); ++b, ++i) out[i] = static_cast<std::uint8_t>(word >> (8 * b));
  }
}

bool SimNetwork::step() {
  while (!queue_.empty()) {
    Event ev = queue_.top();
    queue_.pop();
    if (cancelled_.erase(ev.id)) continue;
    loopTime_ = std::max(loopTime_, ev.time);
    cursor_ = ev.time;
    ev.fn();
    return true;
  }
  return false;
}

void SimNetwork::runUntil(double time) {
  while (!queue_.empty()) {
    const Event& top = queue_.top();
    if (top.time > time) break;
    step();
  }
  loopTime_ = std::max(loopTime_, time);
  cursor_ = loopTime_;
}

void SimNetwork::resetStats() {
  stats_ = TransportStats{};
  stats_.simulatedLatency = profile_.latency;
}

void SimNetwork::deliver(std::size_t bytes) {
  double delay = profile_.latency + static_cast<double>(bytes) / profile_.bandwidth;
  stats_.messageCount += 1;
  stats_.bytesSent += bytes;
  stats_.virtualDelay += delay;
  cursor_ += delay;
}

SimNetwork::HostState* SimNetwork::reachable(const std::string& origin, const std::string& hostName) {
  auto it = hosts_.find(hostName);
  if (it == hosts_.end()) return nullptr;
  if (it->second.down || !connected(origin, hostName)) return nullptr;
  return &it->second;
}

Response SimNetwork::call(const RequestEnvelope& env) {
  auto url = parseUrl(env.target.url);
  if (url.scheme != "sim" || !hosts_.count(url.host)) throw Error(errc::kUnknownTarget, env.target.url);
  HostState* hs = reachable(env.origin, url.host);
  if (!hs) {
    // The request leaves the caller and is lost.
    stats_.messageCount += 1;
    stats_.bytesSent += env.payload.size();
    cursor_ += rpcTimeout_;
    throw Error(errc::kTransportFailure, "no route to " + url.host);
  }
  deliver(env.payload.size());

  // Worker pool: FIFO by processing order, bounded waiting room.
  double arrival = cursor_;
  std::erase_if(hs->waiting, [&](const auto& w) { return w.second <= loopTime_; });
  std::size_t queued = static_cast<std::size_t>(std::count_if(
      hs->waiting.begin(), hs->waiting.end(), [&](const auto& w) { return w.first <= arrival && w.second > arrival; }));
  auto slot = std::min_element(hs->freeAt.begin(), hs->freeAt.end());
  double start = std::max(arrival, *slot);
  Response response;
  if (start == kBusy || (start > arrival && queued >= hs->options.pool.queueCapacity)) {
    response = errorResponse(errc::kQueueFull, "host " + url.host + " is saturated");
    deliver(response.payload.size());
    return response;
  }
  if (start > arrival) hs->waiting.emplace_back(arrival, start);
  cursor_ = start;
  *slot = kBusy;
  response = hs->host->dispatch(env);
  cursor_ += hs->options.processingTime;
  // The host may have been taken down by the handler's own side effects;
  // the worker is released either way.
  *slot = cursor_;
  deliver(response.payload.size());
  return response;
}

void SimNetwork::upload(const std::string& url, const Bytes& body) {
  auto parsed = parseUrl(url);
  if (parsed.scheme != "simx" || !hosts_.count(parsed.host)) throw Error(errc::kUnknownTarget, url);
  HostState* hs = reachable({}, parsed.host);
  if (!hs) {
    stats_.messageCount += 1;
    stats_.bytesSent += body.size();
    cursor_ += rpcTimeout_;
    throw Error(errc::kTransportFailure, "no route to " + parsed.host);
  }
  auto handler = hs->host->transferHandler();
  if (!handler) throw Error(errc::kUnknownTarget, url);
  deliver(body.size());
  try {
    handler->upload(parsed.path, body);
  } catch (...) {
    deliver(0);
    throw;
  }
  deliver(0);
}

Bytes SimNetwork::download(const std::string& url) {
  auto parsed = parseUrl(url);
  if (parsed.scheme != "simx" || !hosts_.count(parsed.host)) throw Error(errc::kUnknownTarget, url);
  HostState* hs = reachable({}, parsed.host);
  if (!hs) {
    stats_.messageCount += 1;
    cursor_ += rpcTimeout_;
    throw Error(errc::kTransportFailure, "no route to " + parsed.host);
  }
  auto handler = hs->host->transferHandler();
  if (!handler) throw Error(errc::kUnknownTarget, url);
  deliver(0);
  Bytes body;
  try {
    body = handler->download(parsed.path);
  } catch (...) {
    deliver(0);
    throw;
  }
  deliver(body.size());
  return body;
}

}  // namespace chelonia::hed
