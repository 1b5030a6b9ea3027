#include "chelonia/shepherd/shepherd.hpp"

#include <tuple>

#include "chelonia/ahash/store.hpp"
#include "chelonia/core/digest.hpp"
#include "chelonia/core/errors.hpp"
#include "chelonia/librarian/metadata.hpp"

namespace chelonia::shepherd {

namespace st = librarian::state;
using ahash::ChangeBatch;
using ahash::ChangeRequest;
using ahash::Condition;

namespace {

Value recordToValue(const ReplicaRecord& r) {
  return {{"ref", r.referenceID}, {"guid", r.guid},   {"state", r.state}, {"checksum", r.checksum},
          {"checksumType", r.checksumType}, {"size", r.size}, {"since", r.since}};
}

ReplicaRecord recordFromValue(const Value& v) {
  ReplicaRecord r;
  r.referenceID = v.at("ref").get<std::string>();
  r.guid = v.at("guid").get<std::string>();
  r.state = v.at("state").get<std::string>();
  r.checksum = v.at("checksum").get<std::string>();
  r.checksumType = v.at("checksumType").get<std::string>();
  r.size = v.at("size").get<std::uint64_t>();
  r.since = v.at("since").get<double>();
  return r;
}

}  // namespace

Shepherd::Shepherd(hed::Runtime& runtime, hed::RpcClient rpc, Backend& backend, ShepherdConfig config)
    : runtime_(runtime),
      rpc_(rpc),
      backend_(backend),
      config_(std::move(config)),
      librarian_(rpc, config_.librarianURLs, errc::kLibrarianUnavailable) {
  if (config_.serviceURL.empty() || config_.transferBase.empty()) {
    throw Error(errc::kBadRequest, "shepherd needs its service URL and transfer base");
  }
  if (!config_.bartenderURLs.empty()) bartender_.emplace(rpc, config_.bartenderURLs, errc::kBartenderUnavailable);
}

Shepherd::~Shepherd() { stop(); }

void Shepherd::start() {
  {
    std::lock_guard lock(mu_);
    records_.clear();
    tickets_.clear();
    Value index = backend_.loadIndex();
    if (index.is_array()) {
      for (const auto& v : index) {
        auto r = recordFromValue(v);
        records_[r.referenceID] = r;
      }
    }
    std::vector<std::string> refs;
    for (const auto& [ref, _] : records_) refs.push_back(ref);
    for (const auto& ref : refs) {
      auto& rec = records_[ref];
      if (rec.state == st::kCreating || rec.state == st::kInvalid) {
        // Tickets do not survive a restart, so an unfinished upload can
        // never complete.
        backend_.remove(ref);
        queueLocked(ref, rec.guid, st::kDeleted);
        eraseLocked(ref);
        continue;
      }
      if (!verifyLocked(rec)) {
        backend_.remove(ref);
        setStateLocked(rec, st::kInvalid);
      }
      queueLocked(ref, rec.guid, rec.state);
    }
    saveLocked();
  }
  heartbeatTask_ = std::make_unique<hed::PeriodicTask>(runtime_, config_.heartbeatPeriod, 0.0, [this] { heartbeat(); });
  double first = config_.firstCheckDelay < 0 ? config_.checkPeriod : config_.firstCheckDelay;
  checkTask_ = std::make_unique<hed::PeriodicTask>(runtime_, config_.checkPeriod, first, [this] { selfCheck(); });
}

void Shepherd::stop() {
  heartbeatTask_.reset();
  checkTask_.reset();
  alive_ = std::make_shared<int>(0);
}

std::vector<ReplicaRecord> Shepherd::records() const {
  std::lock_guard lock(mu_);
  std::vector<ReplicaRecord> out;
  for (const auto& [_, r] : records_) out.push_back(r);
  return out;
}

std::uint64_t Shepherd::used() const {
  std::lock_guard lock(mu_);
  std::uint64_t total = 0;
  for (const auto& [_, r] : records_) total += r.size;
  return total;
}

std::size_t Shepherd::pendingChanges() const {
  std::lock_guard lock(mu_);
  return pending_.size();
}

void Shepherd::setStateLocked(ReplicaRecord& rec, std::string_view state) {
  rec.state = std::string(state);
  rec.since = runtime_.now();
  queueLocked(rec.referenceID, rec.guid, state);
}

void Shepherd::eraseLocked(const std::string& ref) {
  std::erase_if(tickets_, [&](const auto& t) { return t.second.referenceID == ref; });
  records_.erase(ref);
}

void Shepherd::queueLocked(const std::string& ref, const std::string& guid, std::string_view state) {
  pending_[ref] = {guid, std::string(state), ++generation_};
}

void Shepherd::saveLocked() {
  Value index = Value::array();
  for (const auto& [_, r] : records_) index.push_back(recordToValue(r));
  backend_.saveIndex(index);
}

bool Shepherd::verifyLocked(const ReplicaRecord& rec) const {
  if (!backend_.exists(rec.referenceID)) return false;
  Bytes data = backend_.read(rec.referenceID);
  return data.size() == rec.size && checksum(data, rec.checksumType) == rec.checksum;
}

std::string Shepherd::issueTicket(bool upload, const std::string& ref) {
  std::string token = runtime_.randomHex(16);
  tickets_[token] = {upload, ref, runtime_.now(), config_.ticketTTL};
  return config_.transferBase + "/" + token;
}

Ticket Shepherd::redeem(const std::string& token, bool upload) {
  std::lock_guard lock(mu_);
  auto it = tickets_.find(token);
  if (it == tickets_.end()) throw Error(errc::kTicketInvalid, "unknown or used ticket");
  Ticket t = it->second;
  // Single use: gone after the first attempt, whatever its outcome.
  tickets_.erase(it);
  if (t.upload != upload) throw Error(errc::kTicketInvalid, upload ? "download ticket used for upload" : "upload ticket used for download");
  if (runtime_.now() > t.issuedAt + t.ttl) throw Error(errc::kTicketInvalid, "ticket expired");
  return t;
}

Shepherd::PutResult Shepherd::put(const std::string& guid, std::uint64_t size, const std::string& sum,
                                  const std::string& checksumType, const std::string& claim) {
  checksum({}, checksumType);  // rejects unsupported algorithms
  ReplicaRecord rec;
  {
    std::lock_guard lock(mu_);
    std::uint64_t total = 0;
    for (const auto& [_, r] : records_) {
      total += r.size;
      if (r.guid == guid && r.state != st::kInvalid) throw Error(errc::kAlreadyHolder, guid);
    }
    if (total + size > backend_.capacity()) throw Error(errc::kInsufficientSpace, "need " + std::to_string(size) + " bytes");
    rec.referenceID = runtime_.randomHex(16);
    rec.guid = guid;
    rec.state = std::string(st::kCreating);
    rec.checksum = sum;
    rec.checksumType = checksumType;
    rec.size = size;
    rec.since = runtime_.now();
    records_[rec.referenceID] = rec;
  }

  // Registration and the repair claim move together: of two concurrent
  // registrations against the same claim only one lands.
  std::string key = librarian::locationKey(config_.serviceURL, rec.referenceID);
  ChangeBatch b;
  b.atomic = true;
  auto loc = ChangeRequest::set(guid, librarian::section::kLocations, key, std::string(st::kCreating));
  loc.when(Condition::hasKey(librarian::section::kEntry, "type"));
  if (!claim.empty()) loc.when(Condition::equals(librarian::section::kStates, "repairClaim", claim));
  b.add(std::move(loc));
  b.add(ChangeRequest::set(guid, librarian::section::kStates, "repairClaim", runtime_.randomHex(8)));
  b.add(ChangeRequest::set(librarian::locationIndexID(config_.serviceURL), "refs", rec.referenceID, guid));
  bool applied = false;
  try {
    Value r = librarian_.call("modifyMetadata", ahash::toValue(b));
    applied = true;
    for (const auto& [_, outcome] : r.at("results").items()) applied = applied && outcome == ahash::kApplied;
  } catch (...) {
    std::lock_guard lock(mu_);
    records_.erase(rec.referenceID);
    throw;
  }
  std::lock_guard lock(mu_);
  if (!applied) {
    records_.erase(rec.referenceID);
    throw Error(errc::kConditionFailed, "replica registration for " + guid + " lost a race");
  }
  std::string url = issueTicket(true, rec.referenceID);
  saveLocked();
  return {rec.referenceID, url};
}

std::string Shepherd::get(const std::string& guid) {
  std::lock_guard lock(mu_);
  for (const auto& [ref, r] : records_) {
    if (r.guid == guid && r.state == st::kAlive) return issueTicket(false, ref);
  }
  throw Error(errc::kNoAliveReplica, guid);
}

void Shepherd::drop(const std::string& guid) {
  std::lock_guard lock(mu_);
  std::vector<std::string> refs;
  for (const auto& [ref, r] : records_) {
    if (r.guid == guid) refs.push_back(ref);
  }
  for (const auto& ref : refs) {
    backend_.remove(ref);
    queueLocked(ref, guid, st::kDeleted);
    eraseLocked(ref);
  }
  saveLocked();
}

void Shepherd::upload(const std::string& token, const Bytes& body) {
  Ticket t = redeem(token, true);
  {
    std::lock_guard lock(mu_);
    auto it = records_.find(t.referenceID);
    if (it == records_.end() || it->second.state != st::kCreating) throw Error(errc::kTicketInvalid, "replica no longer awaits upload");
    if (body.size() == it->second.size) {
      try {
        backend_.write(t.referenceID, body);
      } catch (const Error&) {
        setStateLocked(it->second, st::kInvalid);
        saveLocked();
        throw;
      }
    }
  }
  if (onUploadComplete(t.referenceID) == st::kInvalid) throw Error(errc::kChecksumMismatch, "uploaded bytes do not match");
}

std::string Shepherd::onUploadComplete(const std::string& ref) {
  std::string state;
  std::string guid;
  {
    std::lock_guard lock(mu_);
    auto it = records_.find(ref);
    if (it == records_.end()) return std::string(st::kDeleted);
    auto& rec = it->second;
    guid = rec.guid;
    if (verifyLocked(rec)) {
      setStateLocked(rec, st::kAlive);
    } else {
      backend_.remove(ref);
      setStateLocked(rec, st::kInvalid);
    }
    state = rec.state;
    saveLocked();
  }
  heartbeat();
  // A fresh replica asks right away whether more copies are needed.
  if (state == st::kAlive) scheduleCheck(guid);
  return state;
}

Bytes Shepherd::download(const std::string& token) {
  Ticket t = redeem(token, false);
  bool corrupt = false;
  Bytes data;
  {
    std::lock_guard lock(mu_);
    auto it = records_.find(t.referenceID);
    if (it == records_.end() || it->second.state != st::kAlive) throw Error(errc::kNoAliveReplica, "replica gone");
    auto& rec = it->second;
    if (backend_.exists(rec.referenceID)) data = backend_.read(rec.referenceID);
    if (!backend_.exists(rec.referenceID) || data.size() != rec.size || checksum(data, rec.checksumType) != rec.checksum) {
      backend_.remove(rec.referenceID);
      setStateLocked(rec, st::kInvalid);
      saveLocked();
      corrupt = true;
    }
  }
  if (corrupt) {
    heartbeat();
    throw Error(errc::kChecksumMismatch, "stored replica failed verification");
  }
  return data;
}

void Shepherd::scheduleCheck(const std::string& guid) {
  std::weak_ptr<int> alive = alive_;
  runtime_.schedule(0.0, [this, alive, guid] {
    if (!alive.lock()) return;
    std::vector<std::string> actions;
    checkGuids({guid}, actions);
  });
}

void Shepherd::heartbeat() {
  std::unique_lock guard(reportMu_, std::try_to_lock);
  if (!guard.owns_lock()) return;  // a report is already on its way
  for (int round = 0; round < 4; ++round) {
    std::map<std::string, Pending> sent;
    Value changes = Value::array();
    {
      std::lock_guard lock(mu_);
      sent = pending_;
    }
    for (const auto& [ref, p] : sent) changes.push_back({{"ref", ref}, {"guid", p.guid}, {"state", p.state}});
    Value r;
    try {
      r = librarian_.call("report", {{"shepherd", config_.serviceURL}, {"changes", changes}});
    } catch (const Error&) {
      return;  // changes stay queued for the next beat
    }
    bool again = false;
    std::lock_guard lock(mu_);
    for (const auto& [ref, p] : sent) {
      auto it = pending_.find(ref);
      if (it != pending_.end() && it->second.generation == p.generation) pending_.erase(it);
    }
    for (const auto& ref : r.at("unknown")) {
      // The namespace no longer knows this replica: an orphan.
      auto it = records_.find(ref.get<std::string>());
      if (it == records_.end()) continue;
      backend_.remove(it->first);
      queueLocked(it->first, it->second.guid, st::kDeleted);
      eraseLocked(it->first);
      again = true;
    }
    if (r.at("resync").get<bool>()) {
      // A librarian declared us offline; restate every replica.
      for (const auto& [ref, rec] : records_) queueLocked(ref, rec.guid, rec.state);
      again = true;
    }
    if (again) saveLocked();
    if (!again) return;
  }
}

std::vector<std::string> Shepherd::selfCheck() {
  std::vector<std::string> actions;
  std::set<std::string> guids;
  {
    std::lock_guard lock(mu_);
    double now = runtime_.now();
    std::vector<std::string> refs;
    for (const auto& [ref, _] : records_) refs.push_back(ref);
    for (const auto& ref : refs) {
      auto& rec = records_[ref];
      if ((rec.state == st::kCreating && now - rec.since > config_.ticketTTL) || rec.state == st::kInvalid ||
          (rec.state == st::kThirdWheel && now - rec.since >= config_.checkPeriod)) {
        actions.push_back("delete " + rec.state + " " + ref);
        backend_.remove(ref);
        queueLocked(ref, rec.guid, st::kDeleted);
        eraseLocked(ref);
      } else if (rec.state == st::kAlive) {
        if (verifyLocked(rec)) {
          guids.insert(rec.guid);
        } else {
          actions.push_back("invalid " + ref);
          backend_.remove(ref);
          setStateLocked(rec, st::kInvalid);
        }
      }
    }
    saveLocked();
  }
  checkGuids(guids, actions);
  return actions;
}

void Shepherd::checkGuids(const std::set<std::string>& guids, std::vector<std::string>& actions) {
  if (guids.empty()) return;
  Value entries;
  try {
    entries = librarian_.call("getMetadata", {{"guids", std::vector<std::string>(guids.begin(), guids.end())}}).at("entries");
  } catch (const Error& e) {
    actions.push_back(std::string("skip: ") + e.what());
    return;
  }
  for (const auto& guid : guids) {
    std::string ref;
    {
      std::lock_guard lock(mu_);
      for (const auto& [r, rec] : records_) {
        if (rec.guid == guid && rec.state == st::kAlive) ref = r;
      }
    }
    if (ref.empty()) continue;
    std::string key = librarian::locationKey(config_.serviceURL, ref);
    librarian::Metadata m;
    bool listed = entries.contains(guid);
    if (listed) {
      m = librarian::fromObject(guid, ahash::objectFromValue(entries.at(guid)));
      listed = m.locations.count(key) > 0;
    }
    if (!listed) {
      actions.push_back("orphan " + ref);
      std::lock_guard lock(mu_);
      backend_.remove(ref);
      queueLocked(ref, guid, st::kDeleted);
      eraseLocked(ref);
      saveLocked();
      continue;
    }
    std::size_t alive = m.count(st::kAlive);
    std::size_t creating = m.count(st::kCreating);
    std::size_t needed = static_cast<std::size_t>(m.neededReplicas);
    if (alive + creating < needed) {
      repair(guid, ref, needed - alive - creating, actions);
    } else if (alive > needed && m.locations[key] == st::kAlive && retiresHere(m)) {
      if (markSurplus(guid, ref, m.repairClaim)) actions.push_back("thirdwheel " + ref);
    }
  }
}

void Shepherd::repair(const std::string& guid, const std::string& ref, std::size_t missing,
                      std::vector<std::string>& actions) {
  if (!bartender_) return;
  Bytes data;
  {
    std::lock_guard lock(mu_);
    if (!backend_.exists(ref)) return;
    data = backend_.read(ref);
  }
  for (std::size_t i = 0; i < missing; ++i) {
    std::string url;
    try {
      url = bartender_->call("addReplica", {{"guid", guid}}).at("url").get<std::string>();
    } catch (const Error& e) {
      actions.push_back("repair " + guid + " stopped: " + e.code());
      return;
    }
    try {
      rpc_.upload(url, data);
      actions.push_back("repair " + guid + " -> " + url);
    } catch (const Error& e) {
      actions.push_back("repair " + guid + " push failed: " + e.code());
      return;
    }
  }
}

// Of the ALIVE holders of an over-replicated file, the one holding the most
// ALIVE replicas gives its copy up (ties: more bytes, then larger URL).
// Holders that cannot be asked are left out.
bool Shepherd::retiresHere(const librarian::Metadata& m) {
  std::tuple<std::uint64_t, std::uint64_t, std::string> best{0, 0, ""};
  for (const auto& [key, state] : m.locations) {
    if (state != st::kAlive) continue;
    std::string url = librarian::splitLocation(key).first;
    std::tuple<std::uint64_t, std::uint64_t, std::string> load;
    if (url == config_.serviceURL) {
      load = {aliveCount(), used(), url};
    } else {
      try {
        Value u = rpc_.call(url, "usage");
        load = {u.value("alive", std::uint64_t{0}), u.at("used").get<std::uint64_t>(), url};
      } catch (const Error&) {
        continue;
      }
    }
    best = std::max(best, load);
  }
  return std::get<2>(best) == config_.serviceURL;
}

std::uint64_t Shepherd::aliveCount() const {
  std::lock_guard lock(mu_);
  std::uint64_t n = 0;
  for (const auto& [_, r] : records_) n += r.state == st::kAlive;
  return n;
}

bool Shepherd::markSurplus(const std::string& guid, const std::string& ref, const std::string& claim) {
  std::string key = librarian::locationKey(config_.serviceURL, ref);
  ChangeBatch b;
  b.atomic = true;
  b.add(ChangeRequest::set(guid, librarian::section::kLocations, key, std::string(st::kThirdWheel))
            .when(Condition::equals(librarian::section::kLocations, key, std::string(st::kAlive)))
            .when(Condition::equals(librarian::section::kStates, "repairClaim", claim)));
  b.add(ChangeRequest::set(guid, librarian::section::kStates, "repairClaim", runtime_.randomHex(8)));
  try {
    Value r = librarian_.call("modifyMetadata", ahash::toValue(b));
    for (const auto& [_, outcome] : r.at("results").items()) {
      if (outcome != ahash::kApplied) return false;
    }
  } catch (const Error&) {
    return false;
  }
  std::lock_guard lock(mu_);
  auto it = records_.find(ref);
  if (it == records_.end()) return false;
  setStateLocked(it->second, st::kThirdWheel);
  saveLocked();
  return true;
}

hed::TransferHandler Shepherd::transferHandler() {
  return {[this](const std::string& token, const Bytes& body) { upload(token, body); },
          [this](const std::string& token) { return download(token); }};
}

Value Shepherd::handle(const hed::CallContext& ctx) {
  const auto& op = ctx.operation;
  const Value& a = ctx.args;
  if (op == "put") {
    auto r = put(a.at("guid").get<std::string>(), a.at("size").get<std::uint64_t>(), a.at("checksum").get<std::string>(),
                 a.at("checksumType").get<std::string>(), a.value("claim", std::string()));
    return Value{{"ref", r.referenceID}, {"url", r.url}};
  }
  if (op == "get") return Value{{"url", get(a.at("guid").get<std::string>())}};
  if (op == "drop") {
    drop(a.at("guid").get<std::string>());
    return Value::object();
  }
  if (op == "usage") {
    std::size_t n;
    {
      std::lock_guard lock(mu_);
      n = records_.size();
    }
    return Value{{"used", used()}, {"capacity", backend_.capacity()}, {"replicas", n}, {"alive", aliveCount()}};
  }
  if (op == "selfCheck") return Value{{"actions", selfCheck()}};
  if (op == "heartbeat") {
    heartbeat();
    return Value::object();
  }
  throw Error(errc::kUnknownOperation, op);
}

}  // namespace chelonia::shepherd
