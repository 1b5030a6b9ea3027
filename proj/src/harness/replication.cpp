// Scheduled fault injection: the scripted scenario kind and the replica
// repair scenario built on it.

#include <algorithm>
#include <sstream>

#include "chelonia/core/digest.hpp"
#include "chelonia/core/errors.hpp"
#include "chelonia/harness/scenario.hpp"
#include "chelonia/librarian/metadata.hpp"
#include "common.hpp"

namespace chelonia::harness {

namespace {

namespace st = librarian::state;
using detail::param;

const std::vector<std::string> kStates{"ALIVE", "OFFLINE", "CREATING", "THIRDWHEEL", "INVALID"};

struct Event {
  double time = 0;
  std::vector<std::string> words;
};

std::vector<Event> parseSchedule(const Config& c) {
  std::vector<Event> out;
  for (const auto* s : c.all("schedule")) {
    auto it = s->values().find("event");
    if (it == s->values().end()) continue;
    for (const auto& line : it->second) {
      std::istringstream in(line);
      Event e;
      if (!(in >> e.time)) throw Error(errc::kBadRequest, "bad schedule line: " + line);
      for (std::string w; in >> w;) e.words.push_back(w);
      if (e.words.empty()) throw Error(errc::kBadRequest, "bad schedule line: " + line);
      out.push_back(std::move(e));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Event& a, const Event& b) { return a.time < b.time; });
  return out;
}

// Runs a schedule against a deployment, sampling replica states at a fixed
// cadence and logging every client operation.
class Engine {
 public:
  Engine(Topology t, std::uint64_t seed, double sampleEvery)
      : d_(std::move(t), seed), seed_(seed), sampleEvery_(sampleEvery) {
    samples_.columns = {"time"};
    for (const auto& s : kStates) samples_.columns.push_back(s);
    samples_.columns.push_back("total");
    for (std::size_t i = 0; i < d_.shepherdURLs().size(); ++i) {
      samples_.columns.push_back("s" + std::to_string(i) + "_ALIVE");
    }
    samples_.columns.push_back("messages");
    samples_.columns.push_back("bytes");
    ops_.columns = {"time", "op", "target", "outcome"};
  }

  Deployment& deployment() { return d_; }

  void run(const std::vector<Event>& events, double end) {
    d_.start();
    t0_ = d_.net().loopTime();
    for (const auto& e : events) {
      d_.net().schedule(std::max(0.0, t0_ + e.time - d_.net().now()), [this, e] { apply(e); });
    }
    if (sampleEvery_ > 0) {
      for (double t = 0; t <= end + 1e-9; t += sampleEvery_) {
        d_.net().schedule(std::max(0.0, t0_ + t - d_.net().now()), [this] { takeSample(); });
      }
    }
    d_.net().runUntil(t0_ + end);
  }

  const std::vector<StateSample>& samples() const { return sampleList_; }
  const Table& sampleTable() const { return samples_; }
  const Table& opTable() const { return ops_; }
  double t0() const { return t0_; }
  int failedOps() const { return failed_; }
  std::vector<std::string> guids() const {
    std::vector<std::string> out;
    for (const auto& [_, g] : files_) out.push_back(g);
    return out;
  }
  // (time, index) of shepherd kills, relative to t0.
  const std::vector<std::pair<double, int>>& shepherdKills() const { return kills_; }
  const std::map<int, ReplicaTally>& tallyAtKill() const { return tallyAtKill_; }

 private:
  double rel() { return d_.net().now() - t0_; }

  void log(const std::string& op, const std::string& target, const std::string& outcome) {
    ops_.add({num(rel()), op, target, outcome});
  }

  void takeSample() {
    auto s = sample(d_);
    s.time -= t0_;
    std::vector<std::string> row{num(s.time)};
    for (const auto& state : kStates) row.push_back(num(s.tally.count(state)));
    row.push_back(num(s.tally.total));
    for (const auto& url : d_.shepherdURLs()) row.push_back(num(s.tally.count(url, "ALIVE")));
    row.push_back(num(s.stats.messageCount));
    row.push_back(num(s.stats.bytesSent));
    samples_.add(std::move(row));
    sampleList_.push_back(std::move(s));
  }

  void service(const std::string& verb, const std::string& kind, int i) {
    bool kill = verb == "kill";
    if (kind == "ahash") {
      if (i < 0) i = d_.ahashMaster();
      if (i < 0) throw Error(errc::kNoMaster, "no master to kill");
      kill ? d_.killAHash(i) : d_.startAHash(i);
    } else if (kind == "librarian") {
      kill ? d_.killLibrarian(i) : d_.startLibrarian(i);
    } else if (kind == "bartender") {
      kill ? d_.killBartender(i) : d_.startBartender(i);
    } else if (kind == "shepherd") {
      if (kill) {
        tallyAtKill_[i] = tallyReplicas(d_.store());
        kills_.emplace_back(rel(), i);
        d_.killShepherd(i);
      } else {
        d_.startShepherd(i);
      }
    } else {
      throw Error(errc::kBadRequest, "unknown service " + kind);
    }
  }

  void corrupt(const std::string& ln, std::size_t which) {
    Value stat = detail::bartender(d_, "stat", {{"ln", ln}});
    auto m = librarian::fromObject(stat.at("guid").get<std::string>(), ahash::objectFromValue(stat.at("metadata")));
    std::vector<std::pair<std::string, std::string>> alive;
    for (const auto& [key, state] : m.locations) {
      if (state == st::kAlive) alive.push_back(librarian::splitLocation(key));
    }
    if (which >= alive.size()) throw Error(errc::kNotFound, "no replica " + std::to_string(which) + " of " + ln);
    d_.backend(d_.shepherdIndex(alive[which].first)).flipBit(alive[which].second, 0);
  }

  void apply(const Event& e) {
    const auto& w = e.words;
    auto arg = [&](std::size_t i) -> const std::string& {
      if (i >= w.size()) throw Error(errc::kBadRequest, "schedule event '" + w[0] + "' lacks arguments");
      return w[i];
    };
    std::string target = w.size() > 1 ? w[1] : "";
    try {
      if (w[0] == "sample") {
        takeSample();
        return;
      }
      if (w[0] == "kill" || w[0] == "restart") {
        std::string who = arg(2);
        service(w[0], arg(1), who == "master" ? -1 : std::stoi(who));
        log(w[0], arg(1) + " " + who, "ok");
        return;
      }
      if (w[0] == "corrupt") {
        corrupt(arg(1), w.size() > 2 ? std::stoul(w[2]) : 0);
      } else if (w[0] == "put") {
        std::size_t size = std::stoul(arg(2));
        int needed = w.size() > 3 ? std::stoi(w[3]) : d_.topology().defaultNeededReplicas;
        files_[arg(1)] = detail::putFile(d_, arg(1), content(seed_, arg(1), size), needed);
        sizes_[arg(1)] = size;
      } else if (w[0] == "get") {
        Bytes b = detail::getFile(d_, arg(1));
        if (b != content(seed_, arg(1), sizes_[arg(1)])) throw Error(errc::kChecksumMismatch, "content differs");
      } else if (w[0] == "mkdir") {
        detail::bartender(d_, "makeCollection", {{"ln", arg(1)}});
      } else if (w[0] == "delete") {
        detail::bartender(d_, "delFile", {{"ln", arg(1)}});
        files_.erase(arg(1));
      } else {
        throw Error(errc::kBadRequest, "unknown schedule event " + w[0]);
      }
      log(w[0], target, "ok");
    } catch (const Error& err) {
      ++failed_;
      log(w[0], target, err.code());
    }
  }

  Deployment d_;
  std::uint64_t seed_;
  double sampleEvery_;
  double t0_ = 0;
  int failed_ = 0;
  Table samples_, ops_;
  std::vector<StateSample> sampleList_;
  std::map<std::string, std::string> files_;
  std::map<std::string, std::size_t> sizes_;
  std::vector<std::pair<double, int>> kills_;
  std::map<int, ReplicaTally> tallyAtKill_;
};

Topology replicationTopology(const Config& c) {
  Topology base;
  base.ahashNodes = 2;
  base.shepherds = 5;
  base.heartbeatPeriod = 10;
  base.grace = 10;
  base.monitorPeriod = 5;
  base.checkPeriod = 30;
  base.firstCheckDelays = {5, 6, 7, 8, 9};
  base.ticketTTL = 60;
  return topologyFrom(c.find("topology"), base);
}

void finalChecks(Report& rep, Engine& eng, bool converged) {
  auto& d = eng.deployment();
  auto f = fsck(d, converged);
  rep.metric("fsck", f.describe());
  rep.check("fsck", f.ok(), f.describe());
  auto reported = serviceTally(d, eng.guids());
  rep.check("fsck tally agrees with services", reported.states == f.tally.states && reported.total == f.tally.total);
}

}  // namespace

Report runScripted(const Config& c, std::uint64_t seed) {
  Report rep;
  Engine eng(topologyFrom(c.find("topology")), seed, param(c, "sampleEvery", 15.0));
  auto events = parseSchedule(c);
  double end = param(c, "end", events.empty() ? 0.0 : events.back().time + 60.0);
  eng.run(events, end);
  eng.deployment().net().runFor(param(c, "settle", 0.0));
  rep.tables["samples"] = eng.sampleTable();
  rep.tables["ops"] = eng.opTable();
  rep.metric("failedOps", static_cast<double>(eng.failedOps()));
  if (param(c, "expectFailures", 0.0) == 0.0) rep.check("all operations succeeded", eng.failedOps() == 0);
  std::string mode = param(c, "fsck", std::string("converged"));
  if (mode != "none") finalChecks(rep, eng, mode == "converged");
  return rep;
}

Report runReplication(const Config& c, std::uint64_t seed) {
  Report rep;
  Topology t = replicationTopology(c);
  int files = static_cast<int>(param(c, "files", 10.0));
  int needed = static_cast<int>(param(c, "needed", 4.0));
  // "114 MB" files, scaled to 114 KiB of real content.
  auto size = static_cast<std::size_t>(param(c, "fileSize", 116736.0));
  double killAt = param(c, "killAt", 300.5);
  double restartAt = param(c, "restartAt", 600.5);
  double end = param(c, "end", 960.0);
  int victim = static_cast<int>(param(c, "victim", 0.0));
  double sampleEvery = param(c, "sampleEvery", 15.0);

  std::vector<Event> events = parseSchedule(c);
  if (events.empty()) {
    for (int k = 0; k < files; ++k) {
      events.push_back({1.0 + k, {"put", "/file" + std::to_string(k), std::to_string(size), std::to_string(needed)}});
    }
    events.push_back({killAt, {"kill", "shepherd", std::to_string(victim)}});
    events.push_back({restartAt, {"restart", "shepherd", std::to_string(victim)}});
  }
  Engine eng(t, seed, sampleEvery);
  eng.run(events, end);
  rep.tables["timeline"] = eng.sampleTable();
  rep.tables["ops"] = eng.opTable();
  rep.check("uploads succeeded", eng.failedOps() == 0, std::to_string(eng.failedOps()) + " failed");

  std::size_t expected = static_cast<std::size_t>(files) * static_cast<std::size_t>(needed);
  const auto& samples = eng.samples();
  const auto& url = eng.deployment().shepherdURLs();

  bool initial = false;
  for (const auto& s : samples) {
    if (s.time < killAt && s.tally.count("ALIVE") == expected && s.tally.total == expected) initial = true;
  }
  rep.check("all replicas ALIVE before the kill", initial);

  std::size_t held = 0;
  if (auto it = eng.tallyAtKill().find(victim); it != eng.tallyAtKill().end()) held = it->second.count(url.at(victim), "ALIVE");
  rep.metric("victimReplicas", static_cast<double>(held));

  // The state right after the failure is detected.
  std::size_t degradedAt = samples.size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i].tally;
    if (samples[i].time > killAt && samples[i].time < restartAt && s.count("ALIVE") == expected - held &&
        s.count("OFFLINE") == held) {
      degradedAt = i;
      break;
    }
  }
  rep.check("degraded state observed", degradedAt < samples.size() && held > 0,
            std::to_string(expected - held) + " ALIVE + " + std::to_string(held) + " OFFLINE");

  // Recovery: ALIVE never drops and reaches the target within five check
  // periods, before the restart.
  bool monotone = true;
  double recoveredAt = -1;
  for (std::size_t i = degradedAt; i < samples.size() && samples[i].time < restartAt; ++i) {
    if (i > degradedAt && samples[i].tally.count("ALIVE") < samples[i - 1].tally.count("ALIVE")) monotone = false;
    if (recoveredAt < 0 && samples[i].tally.count("ALIVE") == expected) recoveredAt = samples[i].time;
  }
  bool inTime = degradedAt < samples.size() && recoveredAt >= 0 &&
                recoveredAt - samples[degradedAt].time <= 5 * t.checkPeriod;
  rep.metric("recoverySeconds", degradedAt < samples.size() && recoveredAt >= 0 ? recoveredAt - samples[degradedAt].time : -1.0);
  rep.check("monotone recovery within five check periods", monotone && inTime);

  bool surplus = false;
  for (const auto& s : samples) {
    if (s.time > restartAt && s.tally.count("THIRDWHEEL") > 0) surplus = true;
  }
  rep.check("surplus marked THIRDWHEEL after restart", surplus);
  const auto& last = samples.back().tally;
  rep.check("final state all ALIVE", last.count("ALIVE") == expected && last.total == expected,
            std::to_string(last.count("ALIVE")) + " ALIVE of " + std::to_string(last.total));
  finalChecks(rep, eng, true);

  // Load per shepherd before the kill and at the end.
  Table dist{{"shepherd", "initial", "final"}, {}};
  const ReplicaTally* before = nullptr;
  if (auto it = eng.tallyAtKill().find(victim); it != eng.tallyAtKill().end()) before = &it->second;
  for (std::size_t i = 0; i < url.size(); ++i) {
    dist.add({Deployment::shepherdHost(static_cast<int>(i)), num(before ? before->count(url[i], "ALIVE") : 0),
              num(last.count(url[i], "ALIVE"))});
  }
  rep.tables["distribution"] = dist;
  return rep;
}

}  // namespace chelonia::harness
