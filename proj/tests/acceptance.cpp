// Runs the bundled scenarios and judges each criterion from the raw tables.
// Expected values are computed here from the protocol, not taken from the
// scenario runners' own checks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "chelonia/harness/scenario.hpp"

using namespace chelonia::harness;

namespace {

struct Verdict {
  bool pass = true;
  std::string why;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!why.empty()) why += "; ";
      why += what;
    }
  }
};

struct Timed {
  Report report;
  double seconds = 0;
};

Timed run(const std::string& name) {
  auto t0 = std::chrono::steady_clock::now();
  Report r = runScenarioFile(resolveScenario(name));
  double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(r), s};
}

const Table& table(const Report& r, const std::string& name) {
  auto it = r.tables.find(name);
  if (it == r.tables.end()) throw std::runtime_error("missing table " + name);
  return it->second;
}

bool checkPassed(const Report& r, const std::string& name) {
  const Check* c = r.find(name);
  return c && c->pass;
}

double metric(const Report& r, const std::string& name) {
  auto it = r.metrics.find(name);
  return it == r.metrics.end() ? NAN : std::stod(it->second);
}

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%g", v);
  return b;
}

// Exact integer fit through the first two points; returns the residual count.
std::size_t misses(const std::vector<double>& y, double& a, double& b) {
  if (y.size() < 2) return 0;
  b = y[1] - y[0];
  a = y[0];
  std::size_t m = 0;
  for (std::size_t i = 0; i < y.size(); ++i) m += y[i] != a + b * static_cast<double>(i);
  return m;
}

Verdict replication() {
  // Same parameters as scenarios/replication.conf.
  const double killAt = 300.5, restartAt = 600.5, checkPeriod = 30;
  const int files = 10, needed = 4;
  auto [r, secs] = run("replication");
  Verdict v;
  const auto& tl = table(r, "timeline");
  auto time = tl.numbers("time"), alive = tl.numbers("ALIVE"), offline = tl.numbers("OFFLINE"),
       third = tl.numbers("THIRDWHEEL");
  const double total = files * needed;
  std::size_t degraded = tl.rows.size();
  for (std::size_t i = 0; i < tl.rows.size(); ++i) {
    if (time[i] > killAt && alive[i] == total - 8 && offline[i] == 8) {
      degraded = i;
      break;
    }
  }
  v.require(degraded < tl.rows.size(), "no sample with 32 ALIVE + 8 OFFLINE");
  if (degraded < tl.rows.size()) {
    bool monotone = true;
    double recovered = -1;
    for (std::size_t i = degraded + 1; i < tl.rows.size() && time[i] < restartAt; ++i) {
      monotone = monotone && alive[i] >= alive[i - 1];
      if (alive[i] == total && recovered < 0) recovered = time[i];
    }
    v.require(monotone, "ALIVE count fell during recovery");
    v.require(recovered > 0 && recovered - killAt <= 5 * checkPeriod,
              "recovery to 40 ALIVE took " + fmt(recovered - killAt) + " s");
  }
  bool thirdwheel = false;
  for (std::size_t i = 0; i < tl.rows.size(); ++i) thirdwheel = thirdwheel || (time[i] > restartAt && third[i] > 0);
  v.require(thirdwheel, "no THIRDWHEEL after restart");
  std::size_t last = tl.rows.size() - 1;
  v.require(alive[last] == total && tl.numbers("total")[last] == total, "final state not exactly 40 ALIVE");
  // fsck rejects two replicas of one file on the same shepherd.
  v.require(checkPassed(r, "fsck"), "fsck failed");
  v.require(secs < 10, "runtime " + fmt(secs) + " s");
  return v;
}

Verdict depth() {
  auto [r, secs] = run("depth");
  (void)secs;
  Verdict v;
  const auto& lan = table(r, "depth_lan");
  const auto& wan = table(r, "depth_wan");
  auto d = lan.numbers("depth");
  auto stat = lan.numbers("statMessages"), create = lan.numbers("createMessages");
  auto wstat = wan.numbers("statMessages"), wcreate = wan.numbers("createMessages");
  v.require(d.size() == 100 && d.front() == 1 && d.back() == 100, "depths are not 1..100");
  // A stat is client->bartender, bartender->librarian and one A-Hash get
  // per path component including the root: 2 + 2 + 2(d+1) messages.
  // A create resolves one component fewer (the new name is absent), then
  // makes two librarian calls that each write once: -2 + 4 + 4 = 6 more.
  // On the WAN each of those two writes is confirmed by two extra replicas.
  const double c = 6, wanExtra = 2 * 2 * 2;
  std::size_t badStat = 0, badGap = 0, badWanStat = 0, badWanCreate = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    badStat += stat[i] != 2 * d[i] + 6;
    badGap += create[i] - stat[i] != c;
    badWanStat += wstat[i] != stat[i];
    badWanCreate += wcreate[i] != create[i] + wanExtra;
  }
  v.require(badStat == 0, std::to_string(badStat) + " depths off stat = 2d+6");
  v.require(badGap == 0, std::to_string(badGap) + " depths off create - stat = 6");
  v.require(badWanStat == 0, std::to_string(badWanStat) + " WAN stats differ from LAN");
  v.require(badWanCreate == 0, std::to_string(badWanCreate) + " WAN creates off LAN + 8");
  return v;
}

Verdict width() {
  auto [r, secs] = run("width");
  (void)secs;
  Verdict v;
  const auto& t = table(r, "width");
  auto n = t.numbers("n");
  auto response = t.numbers("statResponseBytes");
  auto add = t.numbers("addBytes"), stat = t.numbers("statBytes");
  v.require(n.size() == 1001 && n.front() == 0 && n.back() == 1000, "n is not 0..1000");
  double p = 0, q = 0;
  std::size_t m = misses(response, p, q);
  v.require(m == 0 && q > 0, "stat payload p + q*n misses " + std::to_string(m) + " points");
  // From n* on, every create moves fewer bytes than a stat; before it, not.
  std::size_t cross = add.size();
  while (cross > 0 && add[cross - 1] < stat[cross - 1]) --cross;
  v.require(cross > 0 && cross < add.size(), "no byte crossover");
  return v;
}

Verdict multiclient() {
  const double threshold = 30;
  auto [r, secs] = run("multiclient");
  (void)secs;
  Verdict v;
  const auto& t = table(r, "multiclient");
  auto n = t.numbers("clients"), lo = t.numbers("minTime"), avg = t.numbers("avgTime"), hi = t.numbers("maxTime"),
       failures = t.numbers("failures");
  v.require(n.size() == 10 && n.front() == 10 && n.back() == 100, "clients are not 10..100");
  for (std::size_t i = 1; i < n.size(); ++i) v.require(avg[i] >= avg[i - 1], "avg fell at " + fmt(n[i]));
  double mn = 1e300, mx = 0;
  double prevHi = -1;
  for (std::size_t i = 0; i < n.size(); ++i) {
    v.require(failures[i] == 0, "failures at " + fmt(n[i]));
    if (n[i] <= threshold) continue;
    mn = std::min(mn, lo[i]);
    mx = std::max(mx, lo[i]);
    v.require(hi[i] > prevHi, "max did not rise at " + fmt(n[i]));
    prevHi = hi[i];
  }
  v.require((mx - mn) / mn < 0.10, "min varies " + fmt((mx - mn) / mn));
  return v;
}

Verdict bench() {
  // scenarios/ahash-bench.conf: three replicas, 10 s master timeout.
  const int replicas = 3;
  const double masterTimeout = 10;
  auto [r, secs] = run("ahash-bench");
  (void)secs;
  Verdict v;
  const auto& t = table(r, "ahash_bench");
  std::set<double> reads;
  double central = -1;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i][0] == "centralized") central = t.numbers("writeMessages")[i];
    reads.insert(t.numbers("readMessages")[i]);
  }
  v.require(t.rows.size() == 4, "expected four modes");
  v.require(reads.size() == 1, "read message counts differ across modes");
  // One confirmation round: request and reply to each other replica.
  const double round = 2;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& mode = t.rows[i][0];
    double writes = t.numbers("writeMessages")[i];
    if (mode != "centralized")
      v.require(writes == central + (replicas - 1) * round, mode + " writes " + fmt(writes));
    v.require(t.numbers("lost")[i] == 0, mode + " lost writes");
    if (mode == "replicated-unstable-master") {
      double outage = t.numbers("maxOutage")[i];
      double election = outage - masterTimeout;
      double stall = t.numbers("maxStall")[i];
      v.require(t.numbers("restarts")[i] > 0, "master never restarted");
      v.require(election > 0, "no election observed");
      v.require(stall <= masterTimeout + election, "stall " + fmt(stall) + " > " + fmt(masterTimeout + election));
    }
  }
  return v;
}

Verdict election() {
  auto [r, secs] = run("election");
  Verdict v;
  v.require(metric(r, "schedules") >= 1000, "fewer than 1000 schedules");
  v.require(metric(r, "elections") > 0, "no elections happened");
  v.require(metric(r, "masterlessWrites") > 0 && metric(r, "reads") > 0, "probes never ran");
  for (const char* c : {"never two masters in one majority", "writes refused without a master",
                        "live replicas serve reads", "replicas reconverge after healing"})
    v.require(checkPassed(r, c), c);
  v.require(secs < 60, "runtime " + fmt(secs) + " s");
  return v;
}

Verdict roundtrip() {
  auto [r, secs] = run("roundtrip");
  (void)secs;
  Verdict v;
  for (const char* c : {"put/get preserves bytes", "tickets are single-use", "corrupted replica detected on read",
                        "corrupted replica marked INVALID", "downloads never return corrupted bytes",
                        "corrupted replicas replaced"})
    v.require(checkPassed(r, c), c);
  return v;
}

Verdict soak() {
  auto [r, secs] = run("soak");
  (void)secs;
  Verdict v;
  // Master restarts every six hours over one day.
  v.require(table(r, "elections").rows.size() >= 4, "fewer than four elections");
  const auto& gaps = table(r, "gaps");
  auto during = gaps.numbers("duringElection");
  v.require(std::all_of(during.begin(), during.end(), [](double x) { return x == 1; }),
            "write gap outside an election");
  for (const char* c : {"fsck", "client replica restarts invisible", "reads never fail", "every stored file is reachable"})
    v.require(checkPassed(r, c), c);
  return v;
}

}  // namespace

int main() {
  std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"replication repair", replication}, {"depth linearity", depth},
      {"width linearity", width},          {"multi-client queueing", multiclient},
      {"a-hash bench", bench},             {"election safety", election},
      {"round trip and tickets", roundtrip}, {"soak", soak},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.why = e.what();
    }
    failed += !v.pass;
    std::printf("%s criterion %zu %s%s%s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                v.why.empty() ? "" : ": ", v.why.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
