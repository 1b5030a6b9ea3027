// Metadata store benchmarks and randomized election schedules.

#include <algorithm>
#include <functional>
#include <random>
#include <set>

#include "chelonia/ahash/client.hpp"
#include "chelonia/core/errors.hpp"
#include "chelonia/harness/scenario.hpp"
#include "common.hpp"

namespace chelonia::harness {

namespace {

using detail::param;

struct Sample {
  std::uint64_t messages;
  double time;
};

template <typename T>
T median(std::vector<T> v) {
  if (v.empty()) return T{};
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

struct BenchRun {
  std::vector<Sample> reads, writes;
  double maxStall = 0;
  double maxOutage = 0;
  std::size_t verified = 0;
  std::size_t lost = 0;
  std::size_t mismatches = 0;
  std::size_t readFailures = 0;
  std::size_t restarts = 0;
};

struct BenchParams {
  double duration = 600;
  double restartEvery = 60;
  double downtime = 5;
  double think = 0.1;
  double retryInterval = 0.1;
};

BenchRun benchRun(const std::string& mode, Topology t, std::uint64_t seed, const BenchParams& p) {
  t.librarians = 0;
  t.bartenders = 0;
  t.shepherds = 0;
  if (mode == "centralized") t.ahashNodes = 1;
  Deployment d(t, seed);
  d.start();
  auto& net = d.net();
  ahash::AHashClient client(d.client(), d.ahashURLs());
  client.change(ahash::ChangeBatch{}.add(ahash::ChangeRequest::set("warm", "v", "x", "1")));
  client.get("warm");
  net.runFor(1.0);

  BenchRun out;
  double t0 = net.now();
  double end = t0 + p.duration;
  std::map<std::string, std::string> verified;
  std::uint64_t k = 0;
  double firstAttempt = -1;

  std::function<void()> iterate = [&] {
    if (net.now() >= end) return;
    std::string id = "b" + std::to_string(100000 + k);
    std::string value = std::to_string(k);
    if (firstAttempt < 0) firstAttempt = net.now();
    auto before = net.stats();
    double start = net.now();
    try {
      auto r = client.change(ahash::ChangeBatch{}.add(ahash::ChangeRequest::set(id, "v", "x", value)));
      if (!r.allApplied()) throw Error(errc::kConditionFailed, id);
    } catch (const Error&) {
      net.schedule(p.retryInterval, iterate);
      return;
    }
    out.writes.push_back({(net.stats() - before).messageCount, net.now() - start});
    out.maxStall = std::max(out.maxStall, net.now() - firstAttempt);
    firstAttempt = -1;
    verified[id] = value;
    ++k;

    before = net.stats();
    start = net.now();
    try {
      auto o = client.get(id);
      if (ahash::field(o, "v", "x") != value) ++out.mismatches;
      out.reads.push_back({(net.stats() - before).messageCount, net.now() - start});
    } catch (const Error&) {
      ++out.readFailures;
    }
    net.schedule(p.think, iterate);
  };

  // Restarts, and a poller that measures how long the store has no master.
  int rotate = 0;
  double downSince = -1;
  std::function<void()> poll = [&] {
    bool master = d.ahashMaster() >= 0;
    if (!master && downSince < 0) downSince = net.now();
    if (master && downSince >= 0) {
      out.maxOutage = std::max(out.maxOutage, net.now() - downSince);
      downSince = -1;
    }
    if (net.now() < end + 60) net.schedule(0.01, poll);
  };
  if (mode == "replicated-unstable-clients" || mode == "replicated-unstable-master") {
    for (double at = p.restartEvery; at < p.duration; at += p.restartEvery) {
      net.schedule(at, [&] {
        int m = d.ahashMaster();
        int victim = -1;
        if (mode == "replicated-unstable-master") {
          victim = m;
        } else {
          for (int tries = 0; tries < t.ahashNodes && victim < 0; ++tries) {
            int c = rotate++ % t.ahashNodes;
            if (c != m && d.ahashUp(c)) victim = c;
          }
        }
        if (victim < 0) return;
        ++out.restarts;
        if (d.ahashMaster() == victim && downSince < 0) downSince = net.now();
        d.killAHash(victim);
        net.schedule(p.downtime, [&d, victim] { d.startAHash(victim); });
      });
    }
  }
  net.schedule(0.0, iterate);
  net.schedule(0.0, poll);
  net.runUntil(end + 1.0);

  // Let every node rejoin, then check every verified write on every node.
  for (int i = 0; i < t.ahashNodes; ++i) {
    if (!d.ahashUp(i)) d.startAHash(i);
  }
  d.awaitMaster();
  net.runFor(30.0);
  for (int i = 0; i < t.ahashNodes; ++i) {
    for (const auto& [id, value] : verified) {
      if (ahash::field(d.ahash(i)->read(id), "v", "x") != value) ++out.lost;
    }
  }
  out.verified = verified.size();
  return out;
}

}  // namespace

Report runAHashBench(const Config& c, std::uint64_t seed) {
  Report rep;
  Topology base;
  base.ahashNodes = 3;
  Topology t = topologyFrom(c.find("topology"), base);
  BenchParams p;
  p.duration = param(c, "duration", p.duration);
  p.restartEvery = param(c, "restartEvery", p.restartEvery);
  p.downtime = param(c, "downtime", p.downtime);
  p.think = param(c, "think", p.think);
  p.retryInterval = param(c, "retryInterval", p.retryInterval);
  std::vector<std::string> modes{"centralized", "replicated-stable", "replicated-unstable-clients",
                                 "replicated-unstable-master"};
  if (const auto* ps = c.find("params"); ps && ps->has("modes")) modes = ps->getList("modes");

  Table tab{{"mode", "reads", "readMin", "readAvg", "readMax", "readMessages", "writes", "writeMin", "writeAvg",
             "writeMax", "writeMessages", "maxStall", "maxOutage", "restarts", "lost"},
            {}};
  std::map<std::string, BenchRun> runs;
  for (const auto& mode : modes) {
    auto r = benchRun(mode, t, seed, p);
    auto stats = [](const std::vector<Sample>& v, double& lo, double& avg, double& hi) {
      lo = v.empty() ? 0 : 1e300;
      hi = avg = 0;
      for (const auto& s : v) {
        lo = std::min(lo, s.time);
        hi = std::max(hi, s.time);
        avg += s.time;
      }
      if (!v.empty()) avg /= static_cast<double>(v.size());
    };
    double rlo, ravg, rhi, wlo, wavg, whi;
    stats(r.reads, rlo, ravg, rhi);
    stats(r.writes, wlo, wavg, whi);
    std::vector<std::uint64_t> rm, wm;
    for (const auto& s : r.reads) rm.push_back(s.messages);
    for (const auto& s : r.writes) wm.push_back(s.messages);
    tab.add({mode, num(r.reads.size()), num(rlo), num(ravg), num(rhi), num(median(rm)), num(r.writes.size()), num(wlo),
             num(wavg), num(whi), num(median(wm)), num(r.maxStall), num(r.maxOutage), num(r.restarts), num(r.lost)});
    rep.check(mode + ": no verified write lost", r.lost == 0 && r.verified > 0,
              std::to_string(r.lost) + " of " + std::to_string(r.verified));
    rep.check(mode + ": read-back matches", r.mismatches == 0 && r.readFailures == 0,
              std::to_string(r.mismatches) + " mismatches, " + std::to_string(r.readFailures) + " failed reads");
    runs[mode] = std::move(r);
  }
  rep.tables["ahash_bench"] = tab;

  auto medianOf = [&](const std::string& mode, bool reads) {
    std::vector<std::uint64_t> v;
    for (const auto& s : reads ? runs[mode].reads : runs[mode].writes) v.push_back(s.messages);
    return median(v);
  };
  std::set<std::uint64_t> readCounts;
  for (const auto& mode : modes) readCounts.insert(medianOf(mode, true));
  rep.check("read messages equal across modes", readCounts.size() == 1);

  if (runs.count("centralized") && runs.count("replicated-stable")) {
    std::uint64_t central = medianOf("centralized", false);
    std::uint64_t replicated = medianOf("replicated-stable", false);
    std::uint64_t replicas = static_cast<std::uint64_t>(t.ahashNodes - 1);
    rep.metric("centralWriteMessages", static_cast<double>(central));
    rep.metric("replicatedWriteMessages", static_cast<double>(replicated));
    rep.check("replicated write = central + one round per replica", replicated == central + 2 * replicas,
              std::to_string(replicated) + " vs " + std::to_string(central) + " + 2*" + std::to_string(replicas));
  }
  if (runs.count("replicated-unstable-master")) {
    const auto& r = runs["replicated-unstable-master"];
    double election = std::max(0.0, r.maxOutage - t.masterTimeout);
    double bound = t.masterTimeout + election;
    rep.metric("maxWriteStall", r.maxStall);
    rep.metric("electionDuration", election);
    rep.metric("stallBound", bound);
    rep.check("write stall bounded by master timeout + election", r.restarts > 0 && r.maxStall <= bound,
              num(r.maxStall) + " <= " + num(bound));
  }
  return rep;
}

namespace {

struct ScheduleOutcome {
  std::size_t dualMasters = 0;
  std::size_t acceptedWithoutMaster = 0;
  std::size_t masterlessWrites = 0;
  std::size_t failedReads = 0;
  std::size_t reads = 0;
  std::size_t elections = 0;
  bool reconverged = true;
};

ScheduleOutcome electionSchedule(const Topology& base, std::uint64_t seed, double horizon, int events, double step) {
  Topology t = base;
  t.ahashNodes = 3;
  t.librarians = t.bartenders = t.shepherds = 0;
  Deployment d(t, seed);
  d.start();
  auto& net = d.net();
  std::mt19937_64 rng(seed);
  auto uniform = [&](double hi) { return std::uniform_real_distribution<double>(0, hi)(rng); };
  std::vector<std::pair<double, int>> plan;
  for (int i = 0; i < events; ++i) plan.emplace_back(uniform(horizon), static_cast<int>(rng() % 4));
  std::sort(plan.begin(), plan.end());

  ScheduleOutcome out;
  auto rpc = d.client();
  std::vector<std::string> hosts;
  for (int i = 0; i < 3; ++i) hosts.push_back(Deployment::ahashHost(i));
  double t0 = net.loopTime();
  std::size_t next = 0;
  int probe = 0;
  bool hadMaster = true;
  for (double now = 0; now <= horizon; now += step) {
    net.runUntil(std::max(net.loopTime(), t0 + now));
    while (next < plan.size() && plan[next].first <= now) {
      int kind = plan[next++].second;
      std::vector<int> up, down;
      for (int i = 0; i < 3; ++i) (d.ahashUp(i) ? up : down).push_back(i);
      if (kind == 0 && !up.empty()) {
        d.killAHash(up[rng() % up.size()]);
      } else if (kind == 1 && !down.empty()) {
        d.startAHash(down[rng() % down.size()]);
      } else if (kind == 2) {
        int alone = static_cast<int>(rng() % 3);
        std::vector<std::string> rest;
        for (int i = 0; i < 3; ++i) {
          if (i != alone) rest.push_back(hosts[i]);
        }
        net.setPartition({{hosts[alone]}, rest});
      } else {
        net.healPartition();
      }
    }

    // Masters per connected majority of live nodes.
    std::vector<int> live;
    for (int i = 0; i < 3; ++i) {
      if (d.ahashUp(i)) live.push_back(i);
    }
    std::vector<int> masters;
    for (int i : live) {
      if (d.ahash(i)->isActingMaster()) masters.push_back(i);
    }
    for (std::size_t a = 0; a < masters.size(); ++a) {
      for (std::size_t b = a + 1; b < masters.size(); ++b) {
        // Two masters that can talk to each other, or that share a
        // reachable third node, are in one majority.
        bool together = net.connected(hosts[masters[a]], hosts[masters[b]]);
        for (int x : live) {
          if (net.connected(hosts[x], hosts[masters[a]]) && net.connected(hosts[x], hosts[masters[b]])) together = true;
        }
        if (together) ++out.dualMasters;
      }
    }
    if (masters.empty() && hadMaster) ++out.elections;
    hadMaster = !masters.empty();

    // With no master anywhere, every write must be refused; reads are
    // served by whichever replicas are alive.
    for (int i : live) {
      auto url = d.ahashURLs()[static_cast<std::size_t>(i)];
      if (masters.empty()) {
        ahash::ChangeBatch b;
        b.add(ahash::ChangeRequest::set("probe", "p", std::to_string(probe++), "1"));
        ++out.masterlessWrites;
        try {
          rpc.call(url, "change", ahash::toValue(b));
          ++out.acceptedWithoutMaster;
        } catch (const Error&) {
        }
      }
      ++out.reads;
      try {
        rpc.call(url, "get", {{"ids", {"probe"}}});
      } catch (const Error&) {
        ++out.failedReads;
      }
    }
  }

  net.healPartition();
  for (int i = 0; i < 3; ++i) {
    if (!d.ahashUp(i)) d.startAHash(i);
  }
  if (d.awaitMaster(120.0) < 0) {
    out.reconverged = false;
    return out;
  }
  net.runFor(5.0);
  std::string image = d.ahash(0)->canonical();
  for (int i = 1; i < 3; ++i) out.reconverged = out.reconverged && d.ahash(i)->canonical() == image;
  return out;
}

}  // namespace

Report runElection(const Config& c, std::uint64_t seed) {
  Report rep;
  Topology t = topologyFrom(c.find("topology"));
  int schedules = static_cast<int>(param(c, "schedules", 1000.0));
  double horizon = param(c, "horizon", 40.0);
  int events = static_cast<int>(param(c, "events", 6.0));
  double step = param(c, "step", 0.5);

  Table tab{{"schedule", "elections", "dualMasters", "acceptedWithoutMaster", "failedReads", "reconverged"}, {}};
  std::size_t dual = 0, accepted = 0, failedReads = 0, diverged = 0, elections = 0, attempts = 0, reads = 0;
  for (int i = 0; i < schedules; ++i) {
    auto o = electionSchedule(t, seed * 1000003ull + static_cast<std::uint64_t>(i), horizon, events, step);
    tab.add({num(i), num(o.elections), num(o.dualMasters), num(o.acceptedWithoutMaster), num(o.failedReads),
             o.reconverged ? "1" : "0"});
    dual += o.dualMasters;
    accepted += o.acceptedWithoutMaster;
    attempts += o.masterlessWrites;
    reads += o.reads;
    failedReads += o.failedReads;
    diverged += !o.reconverged;
    elections += o.elections;
  }
  rep.tables["election"] = tab;
  rep.metric("schedules", static_cast<double>(schedules));
  rep.metric("elections", static_cast<double>(elections));
  rep.check("never two masters in one majority", dual == 0, std::to_string(dual) + " observations");
  rep.metric("masterlessWrites", static_cast<double>(attempts));
  rep.metric("reads", static_cast<double>(reads));
  rep.check("writes refused without a master", attempts > 0 && accepted == 0,
            std::to_string(accepted) + " of " + std::to_string(attempts) + " accepted");
  rep.check("live replicas serve reads", reads > 0 && failedReads == 0,
            std::to_string(failedReads) + " of " + std::to_string(reads) + " failed");
  rep.check("replicas reconverge after healing", diverged == 0, std::to_string(diverged) + " diverged");
  return rep;
}

}  // namespace chelonia::harness
