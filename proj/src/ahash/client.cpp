#include "chelonia/ahash/client.hpp"

#include <algorithm>
#include <set>

#include "chelonia/core/errors.hpp"

namespace chelonia::ahash {
namespace {

bool unreachable(const Error& e) {
  return e.is(errc::kTransportFailure) || e.is(errc::kNodeDown) || e.is(errc::kUnknownTarget) ||
         e.is(errc::kQueueFull);
}

}  // namespace

bool ChangeOutcome::applied(const std::string& changeID) const {
  auto it = results.find(changeID);
  return it != results.end() && it->second == kApplied;
}

bool ChangeOutcome::allApplied() const {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.second == kApplied; });
}

AHashClient::AHashClient(hed::RpcClient rpc, std::vector<std::string> seedURLs)
    : rpc_(std::move(rpc)), seeds_(std::move(seedURLs)), nodes_(seeds_) {
  if (seeds_.empty()) throw Error(errc::kBadRequest, "at least one A-Hash endpoint is required");
}

std::vector<std::string> AHashClient::nodeURLs() const {
  std::lock_guard lock(mu_);
  return nodes_;
}

std::string AHashClient::masterHint() const {
  std::lock_guard lock(mu_);
  return master_;
}

std::vector<std::string> AHashClient::candidates(const std::string& first) const {
  std::vector<std::string> out;
  if (!first.empty()) out.push_back(first);
  for (const auto& n : nodes_) {
    if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
  }
  return out;
}

void AHashClient::noteFailure(const std::string& url) {
  std::lock_guard lock(mu_);
  if (reader_ == url) reader_.clear();
  if (master_ == url) master_.clear();
}

void AHashClient::refreshNodeList() {
  std::vector<std::string> ask;
  {
    std::lock_guard lock(mu_);
    ask = candidates(reader_);
    for (const auto& s : seeds_) {
      if (std::find(ask.begin(), ask.end(), s) == ask.end()) ask.push_back(s);
    }
  }
  for (const auto& url : ask) {
    try {
      Value r = rpc_.call(url, "getNodeList");
      std::vector<std::string> nodes;
      for (const auto& n : r.at("nodes")) nodes.push_back(n.at("url").get<std::string>());
      if (nodes.empty()) continue;
      std::lock_guard lock(mu_);
      nodes_ = std::move(nodes);
      listFetched_ = true;
      return;
    } catch (const Error& e) {
      if (!unreachable(e)) throw;
    }
  }
}

void AHashClient::ensureNodeList() {
  {
    std::lock_guard lock(mu_);
    if (listFetched_) return;
  }
  refreshNodeList();
}

std::map<std::string, Object> AHashClient::get(const std::vector<std::string>& ids) {
  ensureNodeList();
  Value args = {{"ids", ids}};
  for (int round = 0; round < 2; ++round) {
    std::vector<std::string> order;
    std::uint64_t minSeq;
    {
      std::lock_guard lock(mu_);
      order = candidates(reader_);
      minSeq = lastWritten_;
    }
    bool failed = false;
    for (const auto& url : order) {
      try {
        Value r = rpc_.call(url, "get", args);
        // A replica that has not yet applied our own last write is
        // skipped in favour of one that has.
        if (r.at("seq").get<std::uint64_t>() < minSeq) continue;
        std::map<std::string, Object> out;
        for (const auto& [id, obj] : r.at("objects").items()) out[id] = objectFromValue(obj);
        std::lock_guard lock(mu_);
        reader_ = url;
        return out;
      } catch (const Error& e) {
        if (!unreachable(e)) throw;
        noteFailure(url);
        failed = true;
      }
    }
    if (!failed) break;
    refreshNodeList();
  }
  throw Error(errc::kAHashUnavailable, "no A-Hash replica answered");
}

Object AHashClient::get(const std::string& id) { return get(std::vector<std::string>{id})[id]; }

ChangeOutcome AHashClient::change(const ChangeBatch& batch) {
  ensureNodeList();
  Value args = toValue(batch);
  std::vector<std::string> order;
  {
    std::lock_guard lock(mu_);
    order = candidates(master_);
  }
  std::set<std::string> tried;
  std::string target = order.front();
  bool refreshed = false;
  for (;;) {
    tried.insert(target);
    std::string next;
    try {
      Value r = rpc_.call(target, "change", args);
      ChangeOutcome out;
      out.seq = r.at("seq").get<std::uint64_t>();
      for (const auto& [id, v] : r.at("results").items()) out.results[id] = v.get<std::string>();
      std::lock_guard lock(mu_);
      master_ = target;
      lastWritten_ = std::max(lastWritten_, out.seq);
      return out;
    } catch (const Error& e) {
      if (e.is(errc::kNotMaster)) {
        next = e.detail().is_object() ? e.detail().value("master", std::string()) : std::string();
        if (next.empty() || tried.count(next)) throw Error(errc::kAHashUnavailable, "master unknown");
        std::lock_guard lock(mu_);
        master_ = next;
      } else if (e.is(errc::kNoMaster)) {
        noteFailure(target);
        throw Error(errc::kAHashUnavailable, e.message());
      } else if (unreachable(e)) {
        noteFailure(target);
        if (!refreshed) {
          refreshed = true;
          refreshNodeList();
          std::lock_guard lock(mu_);
          order = candidates({});
        }
        for (const auto& url : order) {
          if (!tried.count(url)) {
            next = url;
            break;
          }
        }
        if (next.empty()) throw Error(errc::kAHashUnavailable, "no A-Hash replica answered");
      } else {
        throw;
      }
    }
    target = next;
  }
}

}  // namespace chelonia::ahash
