#include "chelonia/ahash/node.hpp"

#include <algorithm>
#include <tuple>

#include "chelonia/core/errors.hpp"

namespace chelonia::ahash {

const char* roleName(Role r) {
  switch (r) {
    case Role::kMaster:
      return "MASTER";
    case Role::kClient:
      return "CLIENT";
    case Role::kCandidate:
      return "CANDIDATE";
  }
  return "";
}

AHashNode::AHashNode(hed::Runtime& runtime, hed::RpcClient rpc, LogStore& log, NodeConfig config)
    : runtime_(runtime), rpc_(std::move(rpc)), log_(log), config_(std::move(config)) {
  Recovered r = log_.load();
  store_ = std::move(r.snapshot.store);
  seq_ = baseSeq_ = r.snapshot.seq;
  lastTerm_ = baseTerm_ = r.snapshot.lastTerm;
  for (auto& e : r.tail) {
    store_.apply(e.effects);
    seq_ = e.seq;
    lastTerm_ = e.term;
    tail_.push_back(std::move(e));
  }
  sinceSnapshot_ = tail_.size();
  currentTerm_ = std::max(r.currentTerm, lastTerm_);
  promisedTerm_ = std::max(r.promisedTerm, currentTerm_);
}

AHashNode::~AHashNode() { stop(); }

void AHashNode::start() {
  std::size_t majority;
  {
    std::lock_guard lock(mu_);
    if (running_) return;
    running_ = true;
    role_ = Role::kClient;
    masterID_.clear();
    // A restarted node listens for a while before it calls an election.
    lastHeardMaster_ = runtime_.now() - config_.masterTimeout + 2 * config_.pingInterval;
    electionNotBefore_ = runtime_.now();
    majority = majorityLocked();
  }
  ticker_ = std::make_unique<hed::PeriodicTask>(runtime_, config_.tickInterval,
                                                runtime_.uniform(0.0, config_.tickInterval), [this] { tick(); });
  if (majority == 1) {
    std::weak_ptr<int> alive = alive_;
    std::uint64_t term;
    {
      std::lock_guard lock(mu_);
      term = std::max(currentTerm_, promisedTerm_) + 1;
    }
    runtime_.schedule(0.0, [this, alive, term] {
      if (alive.lock()) becomeMaster(term);
    });
  }
}

void AHashNode::stop() {
  ticker_.reset();
  std::lock_guard lock(mu_);
  running_ = false;
  role_ = Role::kClient;
  masterID_.clear();
}

void AHashNode::requireRunning() const {
  if (!running_) throw Error(errc::kNodeDown, config_.nodeID);
}

Value AHashNode::handle(const hed::CallContext& ctx) {
  const auto& op = ctx.operation;
  if (op == "get") return opGet(ctx.args);
  if (op == "change") return opChange(ctx.args);
  if (op == "replicate") return opReplicate(ctx.callerDN, ctx.args);
  if (op == "installSnapshot") return opInstallSnapshot(ctx.callerDN, ctx.args);
  if (op == "ping") return opPing(ctx.callerDN, ctx.args);
  if (op == "poll") return opPoll(ctx.args);
  if (op == "announce") return opAnnounce(ctx.args);
  if (op == "nominate") return opNominate(ctx.args);
  if (op == "getNodeList") {
    std::lock_guard lock(mu_);
    requireRunning();
    Value nodes = Value::array();
    for (const auto& p : peersLocked()) nodes.push_back({{"id", p.id}, {"url", p.url}, {"dn", p.dn}});
    return {{"nodes", std::move(nodes)}};
  }
  if (op == "status") {
    auto s = status();
    if (!s.running) throw Error(errc::kNodeDown, config_.nodeID);
    return {{"nodeID", s.nodeID}, {"role", roleName(s.role)}, {"seq", s.seq},
            {"term", s.currentTerm}, {"master", s.masterID}};
  }
  throw Error(errc::kUnknownOperation, op);
}

// --- state helpers -------------------------------------------------------

std::vector<Peer> AHashNode::peersLocked() const {
  const Object& list = store_.get(kNodeListID);
  auto nodes = list.find("nodes");
  if (nodes == list.end() || nodes->second.empty()) return config_.peers;
  std::vector<Peer> out;
  for (const auto& [id, url] : nodes->second) out.push_back({id, url, field(list, "dns", id)});
  return out;
}

std::vector<Peer> AHashNode::peers() const {
  std::lock_guard lock(mu_);
  return peersLocked();
}

std::size_t AHashNode::majorityLocked() const { return peersLocked().size() / 2 + 1; }

bool AHashNode::leaseValidLocked() const {
  if (role_ != Role::kMaster) return false;
  std::size_t need = majorityLocked() - 1;
  if (need == 0) return true;
  std::vector<double> acks;
  for (const auto& p : peersLocked()) {
    if (p.id == config_.nodeID) continue;
    auto it = peerState_.find(p.id);
    acks.push_back(it == peerState_.end() ? -1e300 : it->second.lastAck);
  }
  if (acks.size() < need) return false;
  std::sort(acks.begin(), acks.end(), std::greater<>());
  return acks[need - 1] >= runtime_.now() - config_.masterTimeout / 2;
}

bool AHashNode::isActingMaster() const {
  std::lock_guard lock(mu_);
  return running_ && leaseValidLocked();
}

std::uint64_t AHashNode::lastAppliedSeq() const {
  std::lock_guard lock(mu_);
  return seq_;
}

NodeStatus AHashNode::status() const {
  std::lock_guard lock(mu_);
  return {config_.nodeID, role_,        running_, running_ && leaseValidLocked(), seq_, lastTerm_,
          currentTerm_,   masterID_};
}

Object AHashNode::read(const std::string& id) const {
  std::lock_guard lock(mu_);
  return store_.get(id);
}

std::string AHashNode::canonical() const {
  std::lock_guard lock(mu_);
  return store_.canonical();
}

Store AHashNode::storeCopy() const {
  std::lock_guard lock(mu_);
  return store_;
}

void AHashNode::appendLocked(LogEntry entry) {
  log_.append(entry);
  store_.apply(entry.effects);
  seq_ = entry.seq;
  lastTerm_ = entry.term;
  tail_.push_back(std::move(entry));
  if (++sinceSnapshot_ >= config_.snapshotEvery) {
    log_.saveSnapshot({store_, seq_, lastTerm_});
    sinceSnapshot_ = 0;
  }
  while (tail_.size() > config_.retainEntries) {
    baseSeq_ = tail_.front().seq;
    baseTerm_ = tail_.front().term;
    tail_.pop_front();
  }
}

std::optional<std::uint64_t> AHashNode::termAtLocked(std::uint64_t seq) const {
  if (seq == seq_) return lastTerm_;
  if (seq == baseSeq_) return baseTerm_;
  if (seq == 0) return 0;
  if (seq < baseSeq_ || seq > seq_) return std::nullopt;
  return tail_[seq - baseSeq_ - 1].term;
}

void AHashNode::persistTermsLocked() { log_.saveTerms(currentTerm_, promisedTerm_); }

std::string AHashNode::masterURLLocked() const {
  for (const auto& p : peersLocked()) {
    if (p.id == masterID_) return p.url;
  }
  return {};
}

void AHashNode::adoptMasterLocked(std::uint64_t term, const std::string& master) {
  bool changed = term != currentTerm_ || masterID_ != master;
  currentTerm_ = term;
  promisedTerm_ = std::max(promisedTerm_, term);
  masterID_ = master;
  if (master != config_.nodeID) role_ = Role::kClient;
  lastHeardMaster_ = runtime_.now();
  if (changed) persistTermsLocked();
}

void AHashNode::checkFromMasterLocked(const std::string& callerDN, std::uint64_t term, const std::string& master) {
  requireRunning();
  std::string dn;
  for (const auto& p : peersLocked()) {
    if (p.id == master) dn = p.dn;
  }
  if (dn.empty() || dn != callerDN || master == config_.nodeID) {
    throw Error(errc::kNotFromMaster, callerDN + " is not a master", {{"term", currentTerm_}});
  }
  if (term < currentTerm_ || (term == currentTerm_ && !masterID_.empty() && masterID_ != master)) {
    throw Error(errc::kNotFromMaster, "stale term " + std::to_string(term), {{"term", currentTerm_}});
  }
  if (role_ == Role::kMaster) stepDownLocked();
  adoptMasterLocked(term, master);
}

void AHashNode::stepDownLocked() {
  if (role_ == Role::kMaster) {
    role_ = Role::kClient;
    masterID_.clear();
    lastHeardMaster_ = runtime_.now();
  }
}

void AHashNode::stepDown() {
  std::lock_guard lock(mu_);
  stepDownLocked();
}

// --- reads and writes ----------------------------------------------------

Value AHashNode::opGet(const Value& args) const {
  std::lock_guard lock(mu_);
  requireRunning();
  Value objects = Value::object();
  for (const auto& id : args.at("ids")) {
    auto key = id.get<std::string>();
    objects[key] = toValue(store_.get(key));
  }
  return {{"objects", std::move(objects)}, {"seq", seq_}};
}

Value AHashNode::opChange(const Value& args) { return commit(batchFromValue(args)); }

Value AHashNode::commit(const ChangeBatch& batch) {
  std::lock_guard writer(writeMu_);
  LogEntry entry;
  ChangeResults results;
  std::uint64_t prevTerm;
  std::vector<Peer> targets;
  std::uint64_t term;
  {
    std::lock_guard lock(mu_);
    requireRunning();
    if (role_ != Role::kMaster) {
      bool knownMaster = !masterID_.empty() && runtime_.now() - lastHeardMaster_ <= config_.masterTimeout;
      if (knownMaster) {
        auto url = masterURLLocked();
        throw Error(errc::kNotMaster, "master is " + masterID_, {{"master", url}, {"masterID", masterID_}});
      }
      throw Error(errc::kNoMaster, "election in progress");
    }
    if (!leaseValidLocked()) throw Error(errc::kNoMaster, "master lease lapsed");
    results = store_.evaluate(batch, entry.effects);
    Value out = Value::object();
    if (entry.effects.empty()) {
      for (const auto& [id, r] : results) out[id] = r;
      return {{"results", std::move(out)}, {"seq", seq_}};
    }
    prevTerm = lastTerm_;
    term = currentTerm_;
    entry.seq = seq_ + 1;
    entry.term = term;
    appendLocked(entry);
    for (const auto& p : peersLocked()) {
      if (p.id != config_.nodeID && peerState_[p.id].live) targets.push_back(p);
    }
  }

  std::size_t confirmed = 1;
  std::uint64_t higherTerm = 0;
  Value msg = {{"term", term}, {"master", config_.nodeID}, {"prevSeq", entry.seq - 1}, {"prevTerm", prevTerm},
               {"entries", Value::array({toValue(entry)})}};
  for (const auto& peer : targets) {
    bool ok = false;
    try {
      rpc_.call(peer.url, "replicate", msg);
      ok = true;
    } catch (const Error& e) {
      if (e.is(errc::kGapDetected)) {
        ok = catchUp(peer, e.detail().value("seq", std::uint64_t{0}), e.detail().value("lastTerm", std::uint64_t{0}));
      } else if (e.is(errc::kNotFromMaster) && e.detail().is_object()) {
        higherTerm = std::max(higherTerm, e.detail().value("term", std::uint64_t{0}));
      }
    }
    std::lock_guard lock(mu_);
    if (ok) {
      confirmed++;
    } else {
      peerState_[peer.id].live = false;
    }
  }

  std::lock_guard lock(mu_);
  if (higherTerm > currentTerm_) stepDownLocked();
  if (role_ != Role::kMaster || currentTerm_ != term) throw Error(errc::kNoMaster, "lost mastership during write");
  if (confirmed < majorityLocked()) {
    stepDownLocked();
    throw Error(errc::kNoMaster, "write not confirmed by a majority");
  }
  Value out = Value::object();
  for (const auto& [id, r] : results) out[id] = r;
  return {{"results", std::move(out)}, {"seq", entry.seq}};
}

// --- replica side --------------------------------------------------------

Value AHashNode::opReplicate(const std::string& callerDN, const Value& args) {
  std::lock_guard lock(mu_);
  checkFromMasterLocked(callerDN, args.at("term").get<std::uint64_t>(), args.at("master").get<std::string>());
  auto prevSeq = args.at("prevSeq").get<std::uint64_t>();
  auto prevTerm = args.at("prevTerm").get<std::uint64_t>();
  if (prevSeq != seq_ || prevTerm != lastTerm_) {
    throw Error(errc::kGapDetected, "replica at " + std::to_string(seq_),
                {{"seq", seq_}, {"lastTerm", lastTerm_}});
  }
  for (const auto& v : args.at("entries")) {
    auto e = entryFromValue(v);
    if (e.seq != seq_ + 1) throw Error(errc::kGapDetected, "replica at " + std::to_string(seq_), {{"seq", seq_}, {"lastTerm", lastTerm_}});
    appendLocked(std::move(e));
  }
  return {{"seq", seq_}};
}

Value AHashNode::opInstallSnapshot(const std::string& callerDN, const Value& args) {
  std::lock_guard lock(mu_);
  checkFromMasterLocked(callerDN, args.at("term").get<std::uint64_t>(), args.at("master").get<std::string>());
  Snapshot snap;
  snap.store = Store::fromValue(args.at("objects"));
  snap.seq = args.at("seq").get<std::uint64_t>();
  snap.lastTerm = args.at("lastTerm").get<std::uint64_t>();
  log_.reset(snap);
  store_ = std::move(snap.store);
  seq_ = baseSeq_ = snap.seq;
  lastTerm_ = baseTerm_ = snap.lastTerm;
  tail_.clear();
  sinceSnapshot_ = 0;
  return {{"seq", seq_}};
}

Value AHashNode::opPing(const std::string& callerDN, const Value& args) {
  std::lock_guard lock(mu_);
  checkFromMasterLocked(callerDN, args.at("term").get<std::uint64_t>(), args.at("master").get<std::string>());
  return {{"seq", seq_}, {"lastTerm", lastTerm_}, {"term", currentTerm_}};
}

bool AHashNode::catchUp(const Peer& peer, std::uint64_t peerSeq, std::uint64_t peerLastTerm) {
  Value msg;
  std::string op;
  {
    std::lock_guard lock(mu_);
    if (role_ != Role::kMaster) return false;
    auto t = termAtLocked(peerSeq);
    msg = {{"term", currentTerm_}, {"master", config_.nodeID}};
    if (peerSeq <= seq_ && t && *t == peerLastTerm) {
      op = "replicate";
      Value entries = Value::array();
      for (const auto& e : tail_) {
        if (e.seq > peerSeq) entries.push_back(toValue(e));
      }
      msg["prevSeq"] = peerSeq;
      msg["prevTerm"] = peerLastTerm;
      msg["entries"] = std::move(entries);
    } else {
      // Unknown or divergent history: the replica's extra writes are
      // discarded along with everything else it holds.
      op = "installSnapshot";
      msg["objects"] = store_.toValue();
      msg["seq"] = seq_;
      msg["lastTerm"] = lastTerm_;
    }
  }
  bool ok = false;
  try {
    rpc_.call(peer.url, op, msg);
    ok = true;
  } catch (const Error&) {
    ok = false;
  }
  std::lock_guard lock(mu_);
  peerState_[peer.id].live = ok;
  return ok;
}

// --- election ------------------------------------------------------------

void AHashNode::tick() {
  bool master;
  bool elect = false;
  {
    std::lock_guard lock(mu_);
    if (!running_) return;
    master = role_ == Role::kMaster;
    double now = runtime_.now();
    if (master) {
      if (now - lastPing_ < config_.pingInterval) {
        if (!leaseValidLocked()) stepDownLocked();
        return;
      }
      lastPing_ = now;
    } else {
      elect = !electing_ && now - lastHeardMaster_ > config_.masterTimeout && now >= electionNotBefore_;
    }
  }
  if (master) {
    pingRound();
  } else if (elect) {
    startElection();
  }
}

void AHashNode::pingRound() {
  std::lock_guard writer(writeMu_);
  std::vector<Peer> targets;
  Value msg;
  {
    std::lock_guard lock(mu_);
    if (role_ != Role::kMaster) return;
    msg = {{"term", currentTerm_}, {"master", config_.nodeID}};
    for (const auto& p : peersLocked()) {
      if (p.id != config_.nodeID) targets.push_back(p);
    }
  }
  std::uint64_t higherTerm = 0;
  for (const auto& peer : targets) {
    double sent = runtime_.now();
    try {
      Value r = rpc_.call(peer.url, "ping", msg);
      auto pSeq = r.at("seq").get<std::uint64_t>();
      auto pTerm = r.at("lastTerm").get<std::uint64_t>();
      bool current;
      {
        std::lock_guard lock(mu_);
        peerState_[peer.id].lastAck = sent;
        current = pSeq == seq_ && pTerm == lastTerm_;
        if (current) peerState_[peer.id].live = true;
      }
      if (!current) catchUp(peer, pSeq, pTerm);
    } catch (const Error& e) {
      if (e.is(errc::kNotFromMaster) && e.detail().is_object()) {
        higherTerm = std::max(higherTerm, e.detail().value("term", std::uint64_t{0}));
      }
      std::lock_guard lock(mu_);
      peerState_[peer.id].live = false;
    }
  }
  std::lock_guard lock(mu_);
  if (higherTerm > currentTerm_ || !leaseValidLocked()) stepDownLocked();
}

namespace {
struct Ballot {
  std::uint64_t seq;
  std::uint64_t lastTerm;
  std::string id;
  std::string url;

  bool operator<(const Ballot& o) const { return std::tie(seq, lastTerm, id) < std::tie(o.seq, o.lastTerm, o.id); }
};
}  // namespace

void AHashNode::startElection() {
  std::uint64_t term;
  std::vector<Peer> targets;
  std::vector<Ballot> granted;
  Value msg;
  {
    std::lock_guard lock(mu_);
    if (!running_ || role_ == Role::kMaster || electing_) return;
    electing_ = true;
    role_ = Role::kCandidate;
    term = std::max(currentTerm_, promisedTerm_) + 1;
    promisedTerm_ = term;
    persistTermsLocked();
    std::string selfURL;
    for (const auto& p : peersLocked()) {
      if (p.id == config_.nodeID) {
        selfURL = p.url;
      } else {
        targets.push_back(p);
      }
    }
    granted.push_back({seq_, lastTerm_, config_.nodeID, selfURL});
    msg = {{"term", term}, {"candidate", config_.nodeID}};
  }
  // Every node that answers takes part in the comparison; only grants
  // count towards the majority.
  std::vector<Ballot> answered = granted;
  for (const auto& peer : targets) {
    try {
      Value r = rpc_.call(peer.url, "poll", msg);
      Ballot b{r.at("seq").get<std::uint64_t>(), r.at("lastTerm").get<std::uint64_t>(), peer.id, peer.url};
      answered.push_back(b);
      if (r.value("granted", false)) granted.push_back(b);
    } catch (const Error&) {
    }
  }
  Ballot best;
  {
    std::lock_guard lock(mu_);
    electing_ = false;
    if (!running_ || role_ != Role::kCandidate) return;
    if (granted.size() < majorityLocked()) {
      role_ = Role::kClient;
      electionNotBefore_ = runtime_.now() + runtime_.uniform(0.5, config_.electionBackoff);
      return;
    }
    best = *std::max_element(answered.begin(), answered.end());
    if (best.id != config_.nodeID) {
      role_ = Role::kClient;
      electionNotBefore_ = runtime_.now() + runtime_.uniform(0.5, config_.electionBackoff);
    }
  }
  if (best.id == config_.nodeID) {
    becomeMaster(term);
    return;
  }
  try {
    rpc_.call(best.url, "nominate", {{"term", term}});
  } catch (const Error&) {
  }
}

Value AHashNode::opPoll(const Value& args) {
  std::lock_guard lock(mu_);
  requireRunning();
  auto term = args.at("term").get<std::uint64_t>();
  double now = runtime_.now();
  bool heardMaster = !masterID_.empty() && now - lastHeardMaster_ <= config_.masterTimeout;
  bool grant = role_ != Role::kMaster && !heardMaster && term > promisedTerm_ && term > currentTerm_;
  if (grant) {
    promisedTerm_ = term;
    persistTermsLocked();
    if (role_ == Role::kCandidate) role_ = Role::kClient;
  }
  return {{"granted", grant}, {"seq", seq_}, {"lastTerm", lastTerm_}, {"term", currentTerm_}};
}

Value AHashNode::opNominate(const Value& args) {
  std::lock_guard lock(mu_);
  requireRunning();
  auto term = args.at("term").get<std::uint64_t>();
  if (role_ == Role::kMaster || term < promisedTerm_ || term <= currentTerm_) return {{"accepted", false}};
  std::weak_ptr<int> alive = alive_;
  runtime_.schedule(0.0, [this, alive, term] {
    if (alive.lock()) becomeMaster(term);
  });
  return {{"accepted", true}};
}

Value AHashNode::opAnnounce(const Value& args) {
  std::lock_guard lock(mu_);
  requireRunning();
  auto term = args.at("term").get<std::uint64_t>();
  auto master = args.at("master").get<std::string>();
  bool stale = term < currentTerm_ || term < promisedTerm_ ||
               (term == currentTerm_ && !masterID_.empty() && masterID_ != master);
  if (stale || master == config_.nodeID) return {{"accepted", false}};
  stepDownLocked();
  adoptMasterLocked(term, master);
  return {{"accepted", true}};
}

void AHashNode::becomeMaster(std::uint64_t term) {
  std::vector<Peer> targets;
  {
    std::lock_guard lock(mu_);
    if (!running_ || role_ == Role::kMaster || term < promisedTerm_ || term <= currentTerm_) return;
    currentTerm_ = term;
    promisedTerm_ = term;
    role_ = Role::kMaster;
    masterID_ = config_.nodeID;
    lastHeardMaster_ = runtime_.now();
    persistTermsLocked();
    peerState_.clear();
    for (const auto& p : peersLocked()) {
      if (p.id != config_.nodeID) targets.push_back(p);
    }
  }
  Value msg = {{"term", term}, {"master", config_.nodeID}};
  for (const auto& peer : targets) {
    double sent = runtime_.now();
    try {
      Value r = rpc_.call(peer.url, "announce", msg);
      if (r.value("accepted", false)) {
        std::lock_guard lock(mu_);
        peerState_[peer.id].lastAck = sent;
      }
    } catch (const Error&) {
    }
  }
  {
    std::lock_guard lock(mu_);
    if (role_ != Role::kMaster || currentTerm_ != term) return;
    if (!leaseValidLocked()) {
      stepDownLocked();
      return;
    }
    lastPing_ = runtime_.now();
  }
  pingRound();
  bootstrapNodeList();
}

void AHashNode::bootstrapNodeList() {
  ChangeBatch batch;
  {
    std::lock_guard lock(mu_);
    if (role_ != Role::kMaster || store_.contains(kNodeListID)) return;
    for (const auto& p : config_.peers) {
      batch.add(ChangeRequest::set(kNodeListID, "nodes", p.id, p.url).when(Condition::noKey("nodes", p.id)));
      batch.add(ChangeRequest::set(kNodeListID, "dns", p.id, p.dn).when(Condition::noKey("dns", p.id)));
    }
  }
  try {
    commit(batch);
  } catch (const Error&) {
  }
}

}  // namespace chelonia::ahash
