#include "chelonia/bartender/bartender.hpp"

#include <algorithm>

#include "chelonia/ahash/store.hpp"
#include "chelonia/core/errors.hpp"

namespace chelonia::bartender {

using ahash::ChangeBatch;
using ahash::ChangeRequest;
using ahash::Condition;
using librarian::EntryType;
namespace sec = librarian::section;
namespace act = librarian::action;

bool permits(const Policy& policy, const std::string& dn, std::string_view action) {
  for (const auto& rule : policy) {
    if ((rule.identity == "ANY" || rule.identity == dn) && rule.actions.count(std::string(action))) return rule.allow;
  }
  return false;
}

const Policy& effectivePolicy(const std::vector<librarian::PathElement>& path, std::size_t index,
                              const Policy& fallback) {
  for (std::size_t i = index + 1; i-- > 0;) {
    if (!path[i].policy.empty()) return path[i].policy;
  }
  return fallback;
}

Policy allowAll() {
  return {PolicyRule{"ANY", true, {std::string(act::kRead), std::string(act::kAddEntry), std::string(act::kRemoveEntry),
                                   std::string(act::kModifyPolicy)}}};
}

Bartender::Bartender(hed::Runtime& runtime, hed::RpcClient rpc, BartenderConfig config)
    : runtime_(runtime),
      rpc_(rpc),
      config_(std::move(config)),
      librarian_(rpc, config_.librarianURLs, errc::kLibrarianUnavailable) {}

std::set<std::string> Bartender::publicOperations() {
  return {"makeCollection", "unmakeCollection", "putFile", "getFile", "list", "stat",
          "delFile",        "move",             "mount",   "setPolicy"};
}

librarian::TraverseResult Bartender::traverse(const std::string& ln) {
  librarian::splitLN(ln);
  return librarian::traverseFromValue(librarian_.call("traverseLN", {{"ln", ln}}));
}

void Bartender::require(const librarian::TraverseResult& r, std::size_t index, const std::string& dn,
                        std::string_view action) {
  if (!permits(effectivePolicy(r.path, index, config_.rootPolicy), dn, action)) {
    throw Error(errc::kAccessDenied, std::string(action) + " on " + (r.path[index].name.empty() ? "/" : r.path[index].name));
  }
}

bool Bartender::allApplied(const Value& results) const {
  for (const auto& [_, r] : results.at("results").items()) {
    if (r != ahash::kApplied) return false;
  }
  return true;
}

std::size_t Bartender::newChildParent(const librarian::TraverseResult& r, std::string& name) {
  if (r.resolved()) throw Error(errc::kNameTaken, "entry exists");
  if (r.remainder.find('/') != std::string::npos) throw Error(errc::kParentMissing, r.remainder);
  if (r.terminal().type != EntryType::kCollection) throw Error(errc::kNotACollection, r.terminal().name);
  name = r.remainder;
  return r.path.size() - 1;
}

std::string Bartender::createLinked(const std::string& dn, const std::string& ln, const Value& tmpl) {
  auto r = traverse(ln);
  std::string name;
  std::size_t parent = newChildParent(r, name);
  require(r, parent, dn, act::kAddEntry);
  std::string guid = librarian_.call("newEntry", tmpl).at("guid").get<std::string>();
  const std::string& parentGUID = r.path[parent].guid;
  ChangeBatch link;
  link.atomic = true;
  link.add(ChangeRequest::set(parentGUID, sec::kEntries, name, guid)
               .when(Condition::noKey(sec::kEntries, name))
               .when(Condition::hasKey(sec::kEntry, "type")));
  if (!allApplied(librarian_.call("modifyMetadata", ahash::toValue(link)))) {
    ChangeBatch drop;
    drop.add(ChangeRequest::deleteObject(guid));
    librarian_.call("modifyMetadata", ahash::toValue(drop));
    throw Error(errc::kNameTaken, name);
  }
  return guid;
}

void Bartender::unlinkAndDelete(const std::string& parent, const std::string& name, const std::string& guid) {
  ChangeBatch b;
  b.atomic = true;
  b.add(ChangeRequest::unset(parent, sec::kEntries, name).when(Condition::equals(sec::kEntries, name, guid)));
  b.add(ChangeRequest::deleteObject(guid));
  if (!allApplied(librarian_.call("modifyMetadata", ahash::toValue(b)))) throw Error(errc::kNotFound, name);
}

void Bartender::makeCollection(const std::string& dn, const std::string& ln, const Policy& policy) {
  createLinked(dn, ln, {{"type", "collection"}, {"policy", librarian::toValue(policy)}});
}

void Bartender::mount(const std::string& dn, const std::string& ln, const std::string& url) {
  if (url.empty()) throw Error(errc::kBadRequest, "mount needs an external URL");
  createLinked(dn, ln, {{"type", "mountpoint"}, {"mountURL", url}});
}

void Bartender::unmakeCollection(const std::string& dn, const std::string& ln) {
  auto r = traverse(ln);
  if (!r.resolved()) throw Error(errc::kNotFound, ln);
  if (r.path.size() < 2) throw Error(errc::kBadRequest, "cannot remove the root collection");
  if (r.terminal().type != EntryType::kCollection) throw Error(errc::kNotACollection, ln);
  require(r, r.path.size() - 2, dn, act::kRemoveEntry);
  auto it = r.metadata.find(sec::kEntries);
  if (it != r.metadata.end() && !it->second.empty()) throw Error(errc::kNotEmpty, ln);
  unlinkAndDelete(r.path[r.path.size() - 2].guid, r.terminal().name, r.terminal().guid);
}

std::vector<std::string> Bartender::shepherdsByUsage(const std::set<std::string>& exclude) {
  Value list = librarian_.call("listShepherds").at("shepherds");
  std::vector<std::pair<std::uint64_t, std::string>> ranked;
  for (const auto& s : list) {
    std::string url = s.at("url").get<std::string>();
    if (!s.at("alive").get<bool>() || exclude.count(url)) continue;
    try {
      Value u = rpc_.call(url, "usage");
      ranked.emplace_back(u.at("used").get<std::uint64_t>(), url);
    } catch (const Error&) {
      // Not answering; not a candidate this time.
    }
  }
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::string> out;
  for (auto& [_, url] : ranked) out.push_back(std::move(url));
  return out;
}

Value Bartender::putFile(const std::string& dn, const std::string& ln, std::uint64_t size, const std::string& checksum,
                         const std::string& checksumType, int neededReplicas) {
  if (neededReplicas <= 0) neededReplicas = config_.defaultNeededReplicas;
  Value tmpl = {{"type", "file"},
                {"states",
                 {{"size", size}, {"checksum", checksum}, {"checksumType", checksumType}, {"neededReplicas", neededReplicas}}}};
  std::string guid = createLinked(dn, ln, tmpl);
  for (const auto& url : shepherdsByUsage({})) {
    try {
      Value r = rpc_.call(url, "put",
                          {{"guid", guid}, {"size", size}, {"checksum", checksum}, {"checksumType", checksumType}, {"claim", "0"}});
      return Value{{"url", r.at("url")}, {"guid", guid}};
    } catch (const Error& e) {
      if (e.is(errc::kBadRequest)) throw;
    }
  }
  // Nothing will ever hold the bytes: take the entry back out.
  auto parts = librarian::splitLN(ln);
  auto r = traverse(ln);
  if (r.resolved() && r.terminal().guid == guid) unlinkAndDelete(r.path[r.path.size() - 2].guid, parts.back(), guid);
  throw Error(errc::kNoShepherdAvailable, ln);
}

Value Bartender::getFile(const std::string& dn, const std::string& ln) {
  auto r = traverse(ln);
  const auto& t = r.terminal();
  if (t.type == EntryType::kMountpoint) {
    require(r, r.path.size() - 1, dn, act::kRead);
    std::string url = r.resolved() ? t.mountURL : t.mountURL + "/" + r.remainder;
    return Value{{"url", url}, {"external", true}};
  }
  if (!r.resolved()) throw Error(errc::kNotFound, ln);
  if (t.type == EntryType::kCollection) throw Error(errc::kIsCollection, ln);
  require(r, r.path.size() - 1, dn, act::kRead);
  auto m = librarian::fromObject(t.guid, r.metadata);
  std::vector<std::string> alive;
  for (const auto& [key, state] : m.locations) {
    if (state == librarian::state::kAlive) alive.push_back(librarian::splitLocation(key).first);
  }
  // Uniformly random order over the ALIVE replicas.
  for (std::size_t i = alive.size(); i > 1; --i) {
    std::swap(alive[i - 1], alive[runtime_.randomU64() % i]);
  }
  for (const auto& url : alive) {
    try {
      Value g = rpc_.call(url, "get", {{"guid", t.guid}});
      return Value{{"url", g.at("url")}, {"external", false}, {"checksum", m.checksum}, {"checksumType", m.checksumType},
                   {"size", m.size}};
    } catch (const Error&) {
    }
  }
  throw Error(errc::kNoAliveReplica, ln);
}

Value Bartender::list(const std::string& dn, const std::string& ln) {
  auto r = traverse(ln);
  if (!r.resolved()) throw Error(errc::kNotFound, ln);
  if (r.terminal().type != EntryType::kCollection) throw Error(errc::kNotACollection, ln);
  require(r, r.path.size() - 1, dn, act::kRead);
  Value out = Value::object();
  auto it = r.metadata.find(sec::kEntries);
  if (it == r.metadata.end() || it->second.empty()) return Value{{"entries", out}};
  std::vector<std::string> guids;
  for (const auto& [_, g] : it->second) guids.push_back(g);
  Value children = librarian_.call("getMetadata", {{"guids", guids}}).at("entries");
  for (const auto& [name, g] : it->second) {
    std::string type = children.contains(g) ? ahash::field(ahash::objectFromValue(children.at(g)), sec::kEntry, "type") : "";
    out[name] = {{"guid", g}, {"type", type}};
  }
  return Value{{"entries", out}};
}

Value Bartender::stat(const std::string& dn, const std::string& ln) {
  auto r = traverse(ln);
  const auto& t = r.terminal();
  if (!r.resolved()) {
    if (t.type == EntryType::kMountpoint) {
      require(r, r.path.size() - 1, dn, act::kRead);
      return Value{{"guid", ""}, {"type", "external"}, {"url", t.mountURL + "/" + r.remainder}};
    }
    throw Error(errc::kNotFound, ln);
  }
  require(r, r.path.size() - 1, dn, act::kRead);
  Value meta = ahash::toValue(r.metadata);
  // The store drops empty sections; an empty collection still lists its entries.
  if (t.type == EntryType::kCollection && !meta.contains(librarian::section::kEntries))
    meta[librarian::section::kEntries] = Value::object();
  return Value{{"guid", t.guid}, {"type", librarian::entryTypeName(t.type)}, {"metadata", meta}};
}

void Bartender::delFile(const std::string& dn, const std::string& ln) {
  auto r = traverse(ln);
  if (!r.resolved() || r.path.size() < 2) throw Error(errc::kNotFound, ln);
  const auto& t = r.terminal();
  if (t.type == EntryType::kCollection) throw Error(errc::kIsCollection, ln);
  require(r, r.path.size() - 2, dn, act::kRemoveEntry);
  unlinkAndDelete(r.path[r.path.size() - 2].guid, t.name, t.guid);
  // Outstanding tickets die with the replicas; shepherds that miss this
  // find the orphan on their next check.
  auto m = librarian::fromObject(t.guid, r.metadata);
  std::set<std::string> holders;
  for (const auto& [key, _] : m.locations) holders.insert(librarian::splitLocation(key).first);
  for (const auto& url : holders) {
    try {
      rpc_.call(url, "drop", {{"guid", t.guid}});
    } catch (const Error&) {
    }
  }
}

void Bartender::move(const std::string& dn, const std::string& src, const std::string& dst) {
  auto rs = traverse(src);
  if (!rs.resolved()) throw Error(errc::kNotFound, src);
  if (rs.path.size() < 2) throw Error(errc::kBadRequest, "cannot move the root collection");
  auto rd = traverse(dst);
  const auto& moving = rs.terminal();
  std::string name;
  std::size_t dstParent;
  if (rd.resolved() && rd.terminal().type == EntryType::kCollection) {
    // Moving into an existing collection keeps the name.
    name = moving.name;
    dstParent = rd.path.size() - 1;
  } else {
    dstParent = newChildParent(rd, name);
  }
  for (std::size_t i = 0; i <= dstParent; ++i) {
    if (rd.path[i].guid == moving.guid) throw Error(errc::kBadRequest, "cannot move a collection into itself");
  }
  std::size_t srcParent = rs.path.size() - 2;
  require(rs, srcParent, dn, act::kRemoveEntry);
  require(rd, dstParent, dn, act::kAddEntry);
  ChangeBatch b;
  b.atomic = true;
  b.add(ChangeRequest::set(rd.path[dstParent].guid, sec::kEntries, name, moving.guid)
            .when(Condition::noKey(sec::kEntries, name))
            .when(Condition::hasKey(sec::kEntry, "type")));
  b.add(ChangeRequest::unset(rs.path[srcParent].guid, sec::kEntries, moving.name)
            .when(Condition::equals(sec::kEntries, moving.name, moving.guid)));
  if (!allApplied(librarian_.call("modifyMetadata", ahash::toValue(b)))) throw Error(errc::kNameTaken, dst);
}

void Bartender::setPolicy(const std::string& dn, const std::string& ln, const Policy& policy) {
  auto r = traverse(ln);
  if (!r.resolved()) throw Error(errc::kNotFound, ln);
  require(r, r.path.size() - 1, dn, act::kModifyPolicy);
  const auto& guid = r.terminal().guid;
  ChangeBatch b;
  b.atomic = true;
  if (auto it = r.metadata.find(sec::kPolicy); it != r.metadata.end()) {
    for (const auto& [key, _] : it->second) b.add(ChangeRequest::unset(guid, sec::kPolicy, key));
  }
  for (const auto& [key, rule] : librarian::policySection(policy)) b.add(ChangeRequest::set(guid, sec::kPolicy, key, rule));
  if (b.requests.empty()) return;
  b.requests.front().when(Condition::hasKey(sec::kEntry, "type"));
  if (!allApplied(librarian_.call("modifyMetadata", ahash::toValue(b)))) throw Error(errc::kNotFound, ln);
}

Value Bartender::addReplica(const std::string& guid) {
  Value entries = librarian_.call("getMetadata", {{"guids", {guid}}}).at("entries");
  if (!entries.contains(guid)) throw Error(errc::kNotFound, guid);
  auto m = librarian::fromObject(guid, ahash::objectFromValue(entries.at(guid)));
  if (m.type != EntryType::kFile) throw Error(errc::kNotAFile, guid);
  std::size_t have = m.count(librarian::state::kAlive) + m.count(librarian::state::kCreating);
  if (have >= static_cast<std::size_t>(m.neededReplicas)) throw Error(errc::kNotUnderReplicated, guid);
  std::set<std::string> holders;
  for (const auto& [key, _] : m.locations) holders.insert(librarian::splitLocation(key).first);
  for (const auto& url : shepherdsByUsage(holders)) {
    try {
      Value r = rpc_.call(url, "put",
                          {{"guid", guid}, {"size", m.size}, {"checksum", m.checksum}, {"checksumType", m.checksumType},
                           {"claim", m.repairClaim}});
      return Value{{"url", r.at("url")}, {"shepherd", url}};
    } catch (const Error& e) {
      // Someone else registered a replica first.
      if (e.is(errc::kConditionFailed)) throw Error(errc::kNotUnderReplicated, guid);
    }
  }
  throw Error(errc::kNoEligibleShepherd, guid);
}

Value Bartender::handle(const hed::CallContext& ctx) {
  const auto& op = ctx.operation;
  const Value& a = ctx.args;
  const auto& dn = ctx.callerDN;
  auto ln = [&](const char* key = "ln") { return a.at(key).get<std::string>(); };
  if (op == "makeCollection") {
    makeCollection(dn, ln(), librarian::policyFromValue(a.value("policy", Value())));
    return Value::object();
  }
  if (op == "unmakeCollection") {
    unmakeCollection(dn, ln());
    return Value::object();
  }
  if (op == "putFile") {
    return putFile(dn, ln(), a.at("size").get<std::uint64_t>(), a.at("checksum").get<std::string>(),
                   a.value("checksumType", std::string("sha256")), a.value("neededReplicas", 0));
  }
  if (op == "getFile") return getFile(dn, ln());
  if (op == "list") return list(dn, ln());
  if (op == "stat") return stat(dn, ln());
  if (op == "delFile") {
    delFile(dn, ln());
    return Value::object();
  }
  if (op == "move") {
    move(dn, ln("src"), ln("dst"));
    return Value::object();
  }
  if (op == "mount") {
    mount(dn, ln(), a.at("url").get<std::string>());
    return Value::object();
  }
  if (op == "setPolicy") {
    setPolicy(dn, ln(), librarian::policyFromValue(a.at("policy")));
    return Value::object();
  }
  if (op == "addReplica") return addReplica(a.at("guid").get<std::string>());
  throw Error(errc::kUnknownOperation, op);
}

}  // namespace chelonia::bartender
