// Namespace scaling: depth, width and many simultaneous clients.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>

#include "chelonia/cli/cli.hpp"
#include "chelonia/core/errors.hpp"
#include "chelonia/core/wire.hpp"
#include "chelonia/harness/scenario.hpp"
#include "common.hpp"

namespace chelonia::harness {

namespace {

using detail::bartender;
using detail::param;

struct Cost {
  std::uint64_t messages = 0;
  std::uint64_t bytes = 0;
  double time = 0;
};

// Cost of one top-level operation. The loop is drained before and after so
// that background traffic falls outside the window.
Cost measure(Deployment& d, const std::function<void()>& op) {
  d.net().runFor(0.5);
  auto before = d.net().stats();
  double t0 = d.net().now();
  op();
  auto delta = d.net().stats() - before;
  Cost c{delta.messageCount, delta.bytesSent, d.net().now() - t0};
  d.net().runFor(0.5);
  return c;
}

void warmUp(Deployment& d) {
  bartender(d, "makeCollection", {{"ln", "/warm"}});
  bartender(d, "stat", {{"ln", "/warm"}});
  bartender(d, "unmakeCollection", {{"ln", "/warm"}});
  d.net().runFor(1.0);
}

std::string pathOfDepth(int depth) {
  std::string p;
  for (int i = 0; i < depth; ++i) p += "/d";
  return p;
}

struct DepthRun {
  std::vector<Cost> create, stat;  // index depth-1
};

DepthRun depthRun(const Topology& t, std::uint64_t seed, int levels) {
  Deployment d(t, seed);
  d.start();
  warmUp(d);
  DepthRun r;
  for (int depth = 1; depth <= levels; ++depth) {
    std::string ln = pathOfDepth(depth);
    r.create.push_back(measure(d, [&] { bartender(d, "makeCollection", {{"ln", ln}}); }));
    r.stat.push_back(measure(d, [&] { bartender(d, "stat", {{"ln", ln}}); }));
  }
  return r;
}

Table depthTable(const DepthRun& r) {
  Table t{{"depth", "createMessages", "statMessages", "createBytes", "statBytes", "createTime", "statTime"}, {}};
  for (std::size_t i = 0; i < r.create.size(); ++i) {
    t.add({num(i + 1), num(r.create[i].messages), num(r.stat[i].messages), num(r.create[i].bytes),
           num(r.stat[i].bytes), num(r.create[i].time), num(r.stat[i].time)});
  }
  return t;
}

// Exact integer fit y = a + b x over x = x0, x0+1, ...; returns the number
// of points that miss the line through the first two.
std::size_t linearMisses(const std::vector<std::int64_t>& y, std::int64_t& a, std::int64_t& b, std::int64_t x0) {
  if (y.size() < 2) {
    b = 0;
    a = y.empty() ? 0 : y[0];
    return 0;
  }
  b = y[1] - y[0];
  a = y[0] - b * x0;
  std::size_t misses = 0;
  for (std::size_t i = 0; i < y.size(); ++i) misses += y[i] != a + b * (x0 + static_cast<std::int64_t>(i));
  return misses;
}

}  // namespace

Report runDepth(const Config& c, std::uint64_t seed) {
  Report rep;
  int levels = static_cast<int>(param(c, "levels", 100.0));
  int writesPerCreate = static_cast<int>(param(c, "writesPerCreate", 2.0));
  Topology lan = topologyFrom(c.find("topology"));
  lan.shepherds = 0;
  Topology wan = topologyFrom(c.find("wan"), lan);
  if (!c.find("wan")) {
    wan.profile = hed::NetworkProfile::wan();
    wan.ahashNodes = 3;
  }

  auto l = depthRun(lan, seed, levels);
  auto w = depthRun(wan, seed, levels);
  rep.tables["depth_lan"] = depthTable(l);
  rep.tables["depth_wan"] = depthTable(w);

  std::vector<std::int64_t> stat, gap;
  for (int i = 0; i < levels; ++i) {
    stat.push_back(static_cast<std::int64_t>(l.stat[i].messages));
    gap.push_back(static_cast<std::int64_t>(l.create[i].messages) - static_cast<std::int64_t>(l.stat[i].messages));
  }
  std::int64_t a = 0, b = 0;
  std::size_t misses = linearMisses(stat, a, b, 1);
  rep.metric("statIntercept", static_cast<double>(a));
  rep.metric("statSlope", static_cast<double>(b));
  rep.check("stat messages linear in depth", misses == 0 && b > 0,
            "stat = " + std::to_string(a) + " + " + std::to_string(b) + "*depth, " + std::to_string(misses) + " misses");
  bool constant = !gap.empty() && std::all_of(gap.begin(), gap.end(), [&](auto g) { return g == gap.front(); });
  rep.metric("createMinusStat", gap.empty() ? 0.0 : static_cast<double>(gap.front()));
  rep.check("create - stat constant", constant && gap.front() >= 1,
            "c = " + (gap.empty() ? std::string("?") : std::to_string(gap.front())));

  // Under WAN each write is confirmed by every other replica once.
  std::int64_t round = 2LL * writesPerCreate * (wan.ahashNodes - lan.ahashNodes);
  std::size_t statDiff = 0, createDiff = 0;
  for (int i = 0; i < levels; ++i) {
    statDiff += w.stat[i].messages != l.stat[i].messages;
    createDiff += static_cast<std::int64_t>(w.create[i].messages) - static_cast<std::int64_t>(l.create[i].messages) != round;
  }
  rep.metric("wanReplicationMessages", static_cast<double>(round));
  rep.check("wan stat equals lan stat", statDiff == 0, std::to_string(statDiff) + " depths differ");
  rep.check("wan create adds one confirmation round per replica", createDiff == 0,
            "expected +" + std::to_string(round) + ", " + std::to_string(createDiff) + " depths differ");
  bool slower = levels == 0 || w.stat.back().time > l.stat.back().time;
  rep.check("wan slower than lan", slower);
  return rep;
}

Report runWidth(const Config& c, std::uint64_t seed) {
  Report rep;
  int entries = static_cast<int>(param(c, "entries", 1000.0));
  Topology t = topologyFrom(c.find("topology"));
  t.shepherds = 0;
  Deployment d(t, seed);
  d.start();
  warmUp(d);
  bartender(d, "makeCollection", {{"ln", "/w"}});

  Table tab{{"n", "addMessages", "addBytes", "statMessages", "statBytes", "statResponseBytes", "addTime", "statTime"}, {}};
  std::vector<std::int64_t> statBytes, addBytes, responseBytes;
  std::vector<double> statTime, addTime;
  for (int n = 0; n <= entries; ++n) {
    std::size_t response = 0;
    Cost s = measure(d, [&] { response = wire::encodedSize(bartender(d, "stat", {{"ln", "/w"}})); });
    char name[16];
    std::snprintf(name, sizeof name, "e%04d", n);
    Cost a = measure(d, [&] { bartender(d, "makeCollection", {{"ln", std::string("/w/") + name}}); });
    statBytes.push_back(static_cast<std::int64_t>(s.bytes));
    addBytes.push_back(static_cast<std::int64_t>(a.bytes));
    responseBytes.push_back(static_cast<std::int64_t>(response));
    statTime.push_back(s.time);
    addTime.push_back(a.time);
    tab.add({num(n), num(a.messages), num(a.bytes), num(s.messages), num(s.bytes), num(static_cast<std::uint64_t>(response)), num(a.time), num(s.time)});
  }
  rep.tables["width"] = tab;

  std::int64_t p = 0, q = 0;
  std::size_t misses = linearMisses(responseBytes, p, q, 0);
  rep.metric("statBytesBaseline", static_cast<double>(p));
  rep.metric("statBytesPerEntry", static_cast<double>(q));
  rep.check("stat bytes linear in n", misses == 0 && q > 0,
            "stat = " + std::to_string(p) + " + " + std::to_string(q) + "*n, " + std::to_string(misses) + " misses");
  rep.check("n=0 stat equals baseline", !responseBytes.empty() && responseBytes[0] == p);

  // Crossover: the first n from which every add moves fewer bytes than
  // the stat at the same size.
  int cross = -1;
  for (int n = entries; n >= 0; --n) {
    if (addBytes[n] < statBytes[n]) cross = n;
    else break;
  }
  bool exists = cross > 0 && addBytes[0] > statBytes[0];
  rep.metric("crossoverN", static_cast<double>(cross));
  rep.check("byte crossover exists", exists, "n* = " + std::to_string(cross));
  int timeCross = -1;
  for (int n = entries; n >= 0; --n) {
    if (addTime[n] < statTime[n]) timeCross = n;
    else break;
  }
  rep.metric("timeCrossoverN", static_cast<double>(timeCross));
  return rep;
}

namespace {

struct ClientRun {
  double minTime = 0, avgTime = 0, maxTime = 0;
  std::uint64_t retries = 0;
  int failures = 0;
};

// `clients` simulated users each creating `ops` collections one after the
// other. A rejected request is retried with the client's backoff; each
// client is a chain of events, so users interleave on the event loop.
ClientRun clientRun(const Topology& t, std::uint64_t seed, int clients, int ops, const cli::ClientConfig& policy) {
  Deployment d(t, seed);
  d.start();
  warmUp(d);
  for (int i = 0; i < clients; ++i) bartender(d, "makeCollection", {{"ln", "/u" + std::to_string(1000 + i)}});
  d.net().runFor(1.0);

  struct State {
    int done = 0;
    int attempt = 0;
    double finish = -1;
    bool failed = false;
  };
  std::vector<State> st(static_cast<std::size_t>(clients));
  ClientRun out;
  double t0 = d.net().now();
  auto& net = d.net();
  auto rpc = d.client();
  std::string url = d.bartenderURLs().at(0);
  std::function<void(int)> issue = [&](int i) {
    auto& s = st[static_cast<std::size_t>(i)];
    std::string ln = "/u" + std::to_string(1000 + i) + "/k" + std::to_string(100 + s.done);
    try {
      rpc.call(url, "makeCollection", {{"ln", ln}});
    } catch (const Error& e) {
      if (e.code() == errc::kQueueFull && s.attempt + 1 < policy.attempts) {
        double delay = policy.backoff * std::pow(2.0, s.attempt);
        ++s.attempt;
        ++out.retries;
        net.schedule(delay, [&issue, i] { issue(i); });
      } else {
        s.failed = true;
        s.finish = net.now() - t0;
      }
      return;
    }
    s.attempt = 0;
    if (++s.done == ops) {
      s.finish = net.now() - t0;
      return;
    }
    net.schedule(0.0, [&issue, i] { issue(i); });
  };
  for (int i = 0; i < clients; ++i) net.schedule(0.0, [&issue, i] { issue(i); });
  for (int guard = 0; guard < 100000; ++guard) {
    if (std::all_of(st.begin(), st.end(), [](const State& s) { return s.finish >= 0; })) break;
    net.runFor(1.0);
  }
  double sum = 0;
  out.minTime = 1e300;
  for (const auto& s : st) {
    if (s.failed || s.finish < 0) {
      ++out.failures;
      continue;
    }
    out.minTime = std::min(out.minTime, s.finish);
    out.maxTime = std::max(out.maxTime, s.finish);
    sum += s.finish;
  }
  int ok = clients - out.failures;
  out.avgTime = ok ? sum / ok : 0;
  if (!ok) out.minTime = 0;
  return out;
}

}  // namespace

Report runMultiClient(const Config& c, std::uint64_t seed) {
  Report rep;
  Topology t = topologyFrom(c.find("topology"));
  t.shepherds = 0;
  int ops = static_cast<int>(param(c, "ops", 50.0));
  std::vector<int> counts;
  const auto* ps = c.find("params");
  if (ps && ps->has("clients")) {
    for (const auto& v : ps->getList("clients")) counts.push_back(std::stoi(v));
  } else {
    for (int n = 10; n <= 100; n += 10) counts.push_back(n);
  }
  std::sort(counts.begin(), counts.end());
  cli::ClientConfig policy;
  policy.attempts = static_cast<int>(param(c, "attempts", static_cast<double>(policy.attempts)));
  policy.backoff = param(c, "backoff", policy.backoff);
  auto threshold = t.bartenderPool.maxConcurrent;

  Table tab{{"clients", "minTime", "avgTime", "maxTime", "retries", "failures"}, {}};
  std::vector<ClientRun> runs;
  for (int n : counts) {
    runs.push_back(clientRun(t, seed, n, ops, policy));
    const auto& r = runs.back();
    tab.add({num(n), num(r.minTime), num(r.avgTime), num(r.maxTime), num(r.retries), num(r.failures)});
  }
  rep.tables["multiclient"] = tab;

  int failures = 0;
  bool monotone = true;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    failures += runs[i].failures;
    if (i && runs[i].avgTime < runs[i - 1].avgTime) monotone = false;
  }
  rep.check("no client exhausted its retries", failures == 0, std::to_string(failures) + " failures");
  rep.check("average time monotone", monotone);

  double lo = 1e300, hi = 0;
  bool maxRises = true;
  std::size_t above = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (static_cast<std::size_t>(counts[i]) <= threshold) continue;
    lo = std::min(lo, runs[i].minTime);
    hi = std::max(hi, runs[i].minTime);
    if (above && runs[i].maxTime <= runs[i - 1].maxTime) maxRises = false;
    ++above;
  }
  double variation = above ? (hi - lo) / lo : 0.0;
  rep.metric("minTimeVariation", variation);
  rep.check("minimum time flat above threshold", above > 0 && variation < 0.10,
            "variation " + num(variation) + " over " + std::to_string(above) + " runs");
  rep.check("maximum time rises above threshold", above > 1 && maxRises);

  auto single = clientRun(t, seed, 1, ops, policy);
  rep.metric("singleClientTime", single.avgTime);
  rep.check("single client min = avg = max", single.failures == 0 && single.minTime == single.avgTime &&
                                                   single.avgTime == single.maxTime);
  return rep;
}

}  // namespace chelonia::harness
