#include "chelonia/librarian/librarian.hpp"

#include "chelonia/core/digest.hpp"
#include "chelonia/core/errors.hpp"

namespace chelonia::librarian {

using ahash::ChangeBatch;
using ahash::ChangeRequest;
using ahash::Condition;

namespace {

constexpr const char* kHeartbeat = "heartbeat";
constexpr const char* kRefs = "refs";
constexpr const char* kURLs = "urls";

Value elementToValue(const PathElement& e) {
  Value v = {{"name", e.name}, {"guid", e.guid}, {"type", entryTypeName(e.type)}, {"policy", toValue(e.policy)}};
  if (!e.mountURL.empty()) v["mountURL"] = e.mountURL;
  return v;
}

double number(const ahash::Object& o, const char* key) {
  auto s = ahash::field(o, kHeartbeat, key);
  return s.empty() ? 0.0 : std::stod(s);
}

}  // namespace

Value toValue(const TraverseResult& r) {
  Value path = Value::array();
  for (const auto& e : r.path) path.push_back(elementToValue(e));
  Value out = {{"path", path}, {"remainder", r.remainder}};
  if (r.resolved()) out["metadata"] = ahash::toValue(r.metadata);
  return out;
}

TraverseResult traverseFromValue(const Value& v) {
  TraverseResult r;
  for (const auto& e : v.at("path")) {
    r.path.push_back({e.at("name").get<std::string>(), e.at("guid").get<std::string>(),
                      parseEntryType(e.at("type").get<std::string>()), policyFromValue(e.at("policy")),
                      e.value("mountURL", std::string())});
  }
  r.remainder = v.at("remainder").get<std::string>();
  if (v.contains("metadata")) r.metadata = ahash::objectFromValue(v.at("metadata"));
  return r;
}

Librarian::Librarian(hed::Runtime& runtime, hed::RpcClient ahashRpc, LibrarianConfig config)
    : runtime_(runtime), config_(std::move(config)), ahash_(std::move(ahashRpc), config_.ahashURLs) {}

Librarian::~Librarian() { stop(); }

void Librarian::start() {
  try {
    ensureRoot();
  } catch (const Error&) {
    // The store may still be electing; the first traversal retries.
  }
  monitor_ = std::make_unique<hed::PeriodicTask>(runtime_, config_.monitorPeriod, config_.monitorPeriod, [this] {
    try {
      checkShepherds();
    } catch (const Error&) {
    }
  });
  refresher_ = std::make_unique<hed::PeriodicTask>(runtime_, config_.nodeListRefresh, config_.nodeListRefresh,
                                                   [this] { ahash_.refreshNodeList(); });
}

void Librarian::stop() {
  monitor_.reset();
  refresher_.reset();
}

template <typename F>
auto Librarian::withRetry(F&& fn) -> decltype(fn()) {
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const Error& e) {
      if (!e.is(errc::kAHashUnavailable) || attempt >= config_.ahashAttempts) throw;
    }
    runtime_.sleep(config_.ahashRetryDelay);
  }
}

void Librarian::ensureRoot() {
  withRetry([&] {
    if (!ahash_.get(kRootGUID).empty()) return;
    ChangeBatch b;
    b.atomic = true;
    b.add(ChangeRequest::set(kRootGUID, section::kEntry, "type", entryTypeName(EntryType::kCollection))
              .when(Condition::noKey(section::kEntry, "type")));
    b.add(ChangeRequest::set(kRootGUID, section::kStates, "created", formatTime(runtime_.now())));
    ahash_.change(b);
  });
}

TraverseResult Librarian::traverseLN(const std::string& ln) {
  auto parts = splitLN(ln);
  return withRetry([&] {
    TraverseResult r;
    auto root = ahash_.get(kRootGUID);
    if (root.empty()) {
      ensureRoot();
      root = ahash_.get(kRootGUID);
    }
    ahash::Object current = std::move(root);
    auto push = [&](const std::string& name, const std::string& guid) {
      Metadata m = fromObject(guid, current);
      r.path.push_back({name, guid, m.type, m.policy, m.mountURL});
    };
    push("", kRootGUID);
    std::size_t i = 0;
    for (; i < parts.size(); ++i) {
      const auto& top = r.path.back();
      if (top.type != EntryType::kCollection) break;
      std::string child = ahash::field(current, section::kEntries, parts[i]);
      if (child.empty()) break;
      auto next = ahash_.get(child);
      if (!isEntry(next)) break;
      current = std::move(next);
      push(parts[i], child);
    }
    for (std::size_t j = i; j < parts.size(); ++j) {
      if (!r.remainder.empty()) r.remainder += "/";
      r.remainder += parts[j];
    }
    if (r.remainder.empty()) r.metadata = std::move(current);
    return r;
  });
}

std::string Librarian::newEntry(const Value& tmpl) {
  Metadata m;
  try {
    m.type = parseEntryType(tmpl.at("type").get<std::string>());
    if (tmpl.contains("policy")) m.policy = policyFromValue(tmpl.at("policy"));
    if (m.type == EntryType::kFile) {
      const Value& st = tmpl.at("states");
      m.size = st.at("size").get<std::uint64_t>();
      m.checksum = st.at("checksum").get<std::string>();
      m.checksumType = st.value("checksumType", std::string(kDefaultChecksumType));
      m.neededReplicas = st.value("neededReplicas", 1);
      m.repairClaim = "0";
    } else if (m.type == EntryType::kMountpoint) {
      m.mountURL = tmpl.at("mountURL").get<std::string>();
    }
  } catch (const Value::exception& e) {
    throw Error(errc::kBadRequest, "malformed entry template", e.what());
  }
  if (m.type == EntryType::kFile && m.neededReplicas < 1) throw Error(errc::kBadRequest, "neededReplicas must be at least 1");
  if (m.type == EntryType::kMountpoint && m.mountURL.empty()) throw Error(errc::kBadRequest, "mountpoint without URL");
  m.created = formatTime(runtime_.now());
  ahash::Object obj = toObject(m);
  return withRetry([&] {
    for (;;) {
      std::string guid = runtime_.randomHex(16);
      ChangeBatch b;
      b.atomic = true;
      bool first = true;
      for (const auto& [sec, keys] : obj) {
        for (const auto& [k, v] : keys) {
          auto req = ChangeRequest::set(guid, sec, k, v);
          // The sentinel: the entry type must not exist yet.
          if (first) req.when(Condition::noKey(section::kEntry, "type"));
          first = false;
          b.add(std::move(req));
        }
      }
      if (ahash_.change(b).allApplied()) return guid;
    }
  });
}

std::map<std::string, ahash::Object> Librarian::getMetadata(const std::vector<std::string>& guids) {
  return withRetry([&] {
    auto objects = ahash_.get(guids);
    std::erase_if(objects, [](const auto& kv) { return kv.second.empty(); });
    return objects;
  });
}

ahash::ChangeResults Librarian::modifyMetadata(const ChangeBatch& batch) {
  return withRetry([&] { return ahash_.change(batch).results; });
}

Value Librarian::report(const std::string& shepherdURL, const std::string& callerDN,
                        const std::vector<ReplicaChange>& changes) {
  if (shepherdURL.empty()) throw Error(errc::kBadRequest, "report without shepherd URL");
  std::string hb = heartbeatID(shepherdURL);
  std::string index = locationIndexID(shepherdURL);
  return withRetry([&] {
    auto record = ahash_.get(hb);
    bool known = !record.empty();
    bool wasOffline = ahash::field(record, kHeartbeat, "offline") == "1";
    double now = runtime_.now();
    double deadline = now + config_.heartbeatPeriod;

    ChangeBatch b;
    b.add(ChangeRequest::set(hb, kHeartbeat, "last", formatTime(now)));
    b.add(ChangeRequest::set(hb, kHeartbeat, "deadline", formatTime(deadline)));
    b.add(ChangeRequest::set(hb, kHeartbeat, "offline", "0"));
    b.add(ChangeRequest::set(hb, kHeartbeat, "dn", callerDN));
    // Unknown shepherds register themselves with their first report.
    if (!known) b.add(ChangeRequest::set(kShepherdRegistryID, kURLs, shepherdURL, "1"));
    std::map<std::string, std::string> refOf;
    for (std::size_t i = 0; i < changes.size(); ++i) {
      const auto& c = changes[i];
      std::string key = locationKey(shepherdURL, c.referenceID);
      std::string name = "r" + std::to_string(i);
      refOf[name] = c.referenceID;
      if (c.state == state::kDeleted) {
        b.add(ChangeRequest::unset(c.guid, section::kLocations, key).when(Condition::hasKey(section::kLocations, key)).named(name));
        b.add(ChangeRequest::unset(index, kRefs, c.referenceID));
      } else {
        b.add(ChangeRequest::set(c.guid, section::kLocations, key, c.state)
                  .when(Condition::hasKey(section::kLocations, key))
                  .named(name));
      }
    }
    auto outcome = ahash_.change(b);
    Value unknown = Value::array();
    for (std::size_t i = 0; i < changes.size(); ++i) {
      std::string name = "r" + std::to_string(i);
      if (changes[i].state != state::kDeleted && !outcome.applied(name)) unknown.push_back(changes[i].referenceID);
    }
    return Value{{"nextDeadline", deadline}, {"resync", wasOffline}, {"unknown", unknown}};
  });
}

std::vector<ShepherdInfo> Librarian::listShepherds() {
  return withRetry([&] {
    std::vector<ShepherdInfo> out;
    auto registry = ahash_.get(kShepherdRegistryID);
    auto it = registry.find(kURLs);
    if (it == registry.end()) return out;
    std::vector<std::string> ids;
    for (const auto& [url, _] : it->second) ids.push_back(heartbeatID(url));
    auto records = ahash_.get(ids);
    double now = runtime_.now();
    for (const auto& [url, _] : it->second) {
      const auto& rec = records[heartbeatID(url)];
      ShepherdInfo info;
      info.url = url;
      info.dn = ahash::field(rec, kHeartbeat, "dn");
      info.lastHeartbeat = number(rec, "last");
      info.deadline = number(rec, "deadline");
      info.offline = ahash::field(rec, kHeartbeat, "offline") == "1";
      info.alive = !info.offline && now <= info.deadline + config_.grace;
      out.push_back(std::move(info));
    }
    return out;
  });
}

std::vector<std::string> Librarian::checkShepherds() {
  std::vector<std::string> offlined;
  double now = runtime_.now();
  for (const auto& info : listShepherds()) {
    if (info.offline || now <= info.deadline + config_.grace) continue;
    std::string hb = heartbeatID(info.url);
    withRetry([&] {
      auto record = ahash_.get(hb);
      std::string deadline = ahash::field(record, kHeartbeat, "deadline");
      auto index = ahash_.get(locationIndexID(info.url));
      std::vector<std::string> guids;
      std::map<std::string, std::string> refs;
      if (auto it = index.find(kRefs); it != index.end()) refs = it->second;
      for (const auto& [_, guid] : refs) guids.push_back(guid);
      auto entries = guids.empty() ? std::map<std::string, ahash::Object>{} : ahash_.get(guids);

      // One atomic batch guarded by the observed deadline: a concurrent
      // report or another librarian's marking makes the whole batch fail.
      ChangeBatch b;
      b.atomic = true;
      b.add(ChangeRequest::set(hb, kHeartbeat, "offline", "1")
                .when(Condition::equals(kHeartbeat, "deadline", deadline))
                .when(Condition::differs(kHeartbeat, "offline", "1")));
      for (const auto& [ref, guid] : refs) {
        std::string key = locationKey(info.url, ref);
        std::string prev = ahash::field(entries[guid], section::kLocations, key);
        if (prev.empty() || prev == state::kOffline) continue;
        b.add(ChangeRequest::set(guid, section::kLocations, key, std::string(state::kOffline))
                  .when(Condition::equals(section::kLocations, key, prev)));
      }
      if (ahash_.change(b).allApplied()) offlined.push_back(info.url);
    });
  }
  return offlined;
}

Value Librarian::handle(const hed::CallContext& ctx) {
  const auto& op = ctx.operation;
  const Value& a = ctx.args;
  if (op == "traverseLN") return toValue(traverseLN(a.at("ln").get<std::string>()));
  if (op == "newEntry") return Value{{"guid", newEntry(a)}};
  if (op == "getMetadata") {
    Value out = Value::object();
    for (const auto& [guid, obj] : getMetadata(a.at("guids").get<std::vector<std::string>>())) {
      out[guid] = ahash::toValue(obj);
    }
    return Value{{"entries", out}};
  }
  if (op == "modifyMetadata") {
    Value out = Value::object();
    for (const auto& [id, r] : modifyMetadata(ahash::batchFromValue(a))) out[id] = r;
    return Value{{"results", out}};
  }
  if (op == "report") {
    std::vector<ReplicaChange> changes;
    for (const auto& c : a.at("changes")) {
      changes.push_back({c.at("ref").get<std::string>(), c.at("guid").get<std::string>(), c.at("state").get<std::string>()});
    }
    return report(a.at("shepherd").get<std::string>(), ctx.callerDN, changes);
  }
  if (op == "listShepherds") {
    Value out = Value::array();
    for (const auto& s : listShepherds()) {
      out.push_back({{"url", s.url}, {"dn", s.dn}, {"lastHeartbeat", s.lastHeartbeat}, {"deadline", s.deadline},
                     {"offline", s.offline}, {"alive", s.alive}});
    }
    return Value{{"shepherds", out}};
  }
  if (op == "checkShepherds") return Value{{"offlined", checkShepherds()}};
  throw Error(errc::kUnknownOperation, op);
}

}  // namespace chelonia::librarian
