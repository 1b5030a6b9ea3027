// Long mixed workload with metadata-store restarts, and the transfer
// round-trip checks.

#include <algorithm>
#include <functional>
#include <random>

#include "chelonia/core/digest.hpp"
#include "chelonia/core/errors.hpp"
#include "chelonia/harness/scenario.hpp"
#include "chelonia/librarian/metadata.hpp"
#include "common.hpp"

namespace chelonia::harness {

namespace {

using detail::bartender;
using detail::param;

Topology soakTopology(const Config& c) {
  Topology base;
  base.ahashNodes = 3;
  base.librarians = 2;
  base.bartenders = 1;
  base.shepherds = 4;
  base.defaultNeededReplicas = 2;
  base.heartbeatPeriod = 60;
  base.grace = 60;
  base.monitorPeriod = 30;
  base.checkPeriod = 120;
  return topologyFrom(c.find("topology"), base);
}

struct Window {
  double start, end;
  bool master;  // caused by losing the master
};

}  // namespace

Report runSoak(const Config& c, std::uint64_t seed) {
  Report rep;
  Topology t = soakTopology(c);
  double duration = param(c, "duration", 86400.0);
  double opEvery = param(c, "opEvery", 30.0);
  double masterEvery = param(c, "masterRestartEvery", 21600.0);
  double masterOffset = param(c, "masterRestartOffset", 3600.0);
  double clientEvery = param(c, "clientRestartEvery", 21600.0);
  double clientOffset = param(c, "clientRestartOffset", 14400.0);
  double downtime = param(c, "downtime", 30.0);
  double settle = param(c, "settle", 4 * t.checkPeriod + t.heartbeatPeriod + t.grace);
  double slack = param(c, "gapSlack", 5.0);

  Deployment d(t, seed);
  d.start();
  auto& net = d.net();
  double t0 = net.loopTime();
  double end = t0 + duration;
  std::mt19937_64 rng(seed);

  Table ops{{"time", "op", "target", "outcome"}, {}};
  std::vector<std::string> dirs;
  std::map<std::string, std::size_t> files;  // ln -> size
  std::vector<std::pair<double, bool>> writes;  // (time, ok)
  std::size_t readFailures = 0, mismatches = 0;
  int counter = 0;
  std::vector<Window> windows;    // restarts
  std::vector<std::pair<double, double>> outages;  // no acting master
  double noMasterSince = -1;

  if (duration > 0) {
    bartender(d, "makeCollection", {{"ln", "/soak"}});
    dirs.push_back("/soak");
  }

  std::function<void()> work = [&] {
    if (net.now() >= end) return;
    double rel = net.now() - t0;
    int pick = static_cast<int>(rng() % 100);
    std::string op, target;
    bool write = true;
    try {
      if (pick < 35 || files.empty()) {
        op = "put";
        target = dirs[rng() % dirs.size()] + "/f" + std::to_string(counter++);
        std::size_t size = 1024 + rng() % 7168;
        detail::putFile(d, target, content(seed, target, size), t.defaultNeededReplicas);
        files[target] = size;
      } else if (pick < 50) {
        op = "delete";
        auto it = std::next(files.begin(), static_cast<std::ptrdiff_t>(rng() % files.size()));
        target = it->first;
        bartender(d, "delFile", {{"ln", target}});
        files.erase(it);
      } else if (pick < 60) {
        op = "mkdir";
        target = "/soak/d" + std::to_string(counter++);
        bartender(d, "makeCollection", {{"ln", target}});
        dirs.push_back(target);
      } else if (pick < 85) {
        op = "list";
        write = false;
        target = dirs[rng() % dirs.size()];
        bartender(d, "list", {{"ln", target}});
      } else {
        op = "get";
        write = false;
        auto it = std::next(files.begin(), static_cast<std::ptrdiff_t>(rng() % files.size()));
        target = it->first;
        if (detail::getFile(d, target) != content(seed, target, it->second)) ++mismatches;
      }
      ops.add({num(rel), op, target, "ok"});
      if (write) writes.emplace_back(rel, true);
    } catch (const Error& e) {
      ops.add({num(rel), op, target, e.code()});
      if (write) writes.emplace_back(rel, false);
      else ++readFailures;
    }
    double jitter = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
    net.schedule(opEvery * jitter, work);
  };

  auto restart = [&](double at, bool master) {
    net.schedule(at, [&, master] {
      int m = d.ahashMaster();
      int victim = -1;
      for (int i = 0; i < t.ahashNodes && victim < 0; ++i) {
        if (d.ahashUp(i) && ((i == m) == master)) victim = i;
      }
      if (victim < 0) return;
      double rel = net.now() - t0;
      windows.push_back({rel, rel + downtime, master});
      d.killAHash(victim);
      net.schedule(downtime, [&d, victim] { d.startAHash(victim); });
    });
  };
  std::function<void()> poll = [&] {
    double rel = net.now() - t0;
    bool master = d.ahashMaster() >= 0;
    if (!master && noMasterSince < 0) noMasterSince = rel;
    if (master && noMasterSince >= 0) {
      outages.emplace_back(noMasterSince, rel);
      noMasterSince = -1;
    }
    if (net.now() < end) net.schedule(0.5, poll);
  };
  if (duration > 0) {
    if (masterEvery > 0) {
      for (double at = masterOffset; at < duration; at += masterEvery) restart(at, true);
    }
    if (clientEvery > 0) {
      for (double at = clientOffset; at < duration; at += clientEvery) restart(at, false);
    }
    net.schedule(0.0, poll);
    net.schedule(1.0, work);
  }
  net.runUntil(end);
  for (int i = 0; i < t.ahashNodes; ++i) {
    if (!d.ahashUp(i)) d.startAHash(i);
  }
  d.awaitMaster();
  net.runFor(settle);

  // Write gaps: runs of failed writes, closed by the next success.
  Table gaps{{"start", "end", "duration", "failedWrites", "duringElection"}, {}};
  std::size_t outside = 0;
  auto inElection = [&](double tm) {
    for (const auto& [s, e] : outages) {
      if (tm >= s && tm <= e + slack) return true;
    }
    return noMasterSince >= 0 && tm >= noMasterSince;
  };
  for (std::size_t i = 0; i < writes.size();) {
    if (writes[i].second) {
      ++i;
      continue;
    }
    std::size_t j = i;
    bool during = true;
    while (j < writes.size() && !writes[j].second) during = inElection(writes[j++].first) && during;
    double close = j < writes.size() ? writes[j].first : duration;
    gaps.add({num(writes[i].first), num(close), num(close - writes[i].first), num(j - i), during ? "1" : "0"});
    outside += !during;
    i = j;
  }
  Table elections{{"start", "end", "duration"}, {}};
  double longest = 0;
  for (const auto& [s, e] : outages) {
    elections.add({num(s), num(e), num(e - s)});
    longest = std::max(longest, e - s);
  }
  // Restarts of non-master replicas must not disturb clients at all.
  std::size_t clientWindowFailures = 0;
  for (const auto& w : windows) {
    if (w.master) continue;
    for (const auto& [tm, ok] : writes) clientWindowFailures += !ok && tm >= w.start && tm <= w.end + slack;
  }

  rep.tables["ops"] = ops;
  rep.tables["gaps"] = gaps;
  rep.tables["elections"] = elections;
  rep.metric("operations", static_cast<double>(ops.rows.size()));
  rep.metric("writes", static_cast<double>(writes.size()));
  rep.metric("longestElection", longest);
  rep.metric("restarts", static_cast<double>(windows.size()));
  rep.check("write gaps only during elections", outside == 0, std::to_string(outside) + " gaps outside elections");
  rep.check("client replica restarts invisible", clientWindowFailures == 0,
            std::to_string(clientWindowFailures) + " failed writes");
  rep.check("reads never fail", readFailures == 0, std::to_string(readFailures) + " failed reads");
  rep.check("downloads match uploads", mismatches == 0, std::to_string(mismatches) + " mismatches");

  auto f = fsck(d, true);
  rep.metric("fsck", f.describe());
  rep.check("fsck", f.ok(), f.describe());
  std::size_t missing = 0;
  std::vector<std::string> guids;
  for (const auto& [ln, _] : files) {
    try {
      guids.push_back(bartender(d, "stat", {{"ln", ln}}).at("guid").get<std::string>());
    } catch (const Error&) {
      ++missing;
    }
  }
  rep.check("every stored file is reachable", missing == 0 && f.files == files.size(),
            std::to_string(f.files) + " files in the tree, " + std::to_string(files.size()) + " expected");
  auto reported = serviceTally(d, guids);
  rep.check("fsck tally agrees with services", reported.states == f.tally.states);
  return rep;
}

Report runRoundTrip(const Config& c, std::uint64_t seed) {
  Report rep;
  Topology base;
  base.shepherds = 3;
  base.defaultNeededReplicas = 2;
  base.heartbeatPeriod = 10;
  base.grace = 10;
  base.monitorPeriod = 5;
  base.checkPeriod = 30;
  base.ticketTTL = 60;
  Topology t = topologyFrom(c.find("topology"), base);
  Deployment d(t, seed);
  d.start();
  auto& net = d.net();
  auto rpc = d.client();
  int needed = t.defaultNeededReplicas;

  Table trips{{"size", "guid", "preserved"}, {}};
  bool preserved = true;
  for (std::size_t size : {std::size_t{0}, std::size_t{1}, std::size_t{1} << 20}) {
    std::string ln = "/rt" + std::to_string(size);
    Bytes data = content(seed, ln, size);
    bool same = false;
    std::string guid;
    try {
      guid = detail::putFile(d, ln, data, needed);
      net.runFor(1.0);
      same = detail::getFile(d, ln) == data;
    } catch (const Error& e) {
      guid = e.code();
    }
    trips.add({num(size), guid, same ? "1" : "0"});
    preserved = preserved && same;
  }
  rep.tables["roundtrip"] = trips;
  rep.check("put/get preserves bytes", preserved);

  // Tickets: a second use of either kind is refused.
  auto refused = [&](const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.is(errc::kTicketInvalid);
    }
    return false;
  };
  Bytes small = content(seed, "/ticket", 4096);
  Value put = bartender(d, "putFile", {{"ln", "/ticket"}, {"size", small.size()}, {"checksum", checksum(small)},
                                        {"neededReplicas", 1}});
  std::string upURL = put.at("url").get<std::string>();
  rpc.upload(upURL, small);
  bool upOnce = refused([&] { rpc.upload(upURL, small); });
  std::string downURL = bartender(d, "getFile", {{"ln", "/ticket"}}).at("url").get<std::string>();
  bool first = rpc.download(downURL) == small;
  bool downOnce = refused([&] { rpc.download(downURL); });
  rep.check("tickets are single-use", upOnce && first && downOnce);

  // Corruption: a flipped bit is caught on read, the replica goes INVALID
  // and is replaced; no download ever returns the wrong bytes.
  std::string ln = "/corrupt";
  Bytes data = content(seed, ln, 65536);
  std::string guid = detail::putFile(d, ln, data, needed);
  net.runFor(5.0);
  auto m = librarian::fromObject(guid, d.store().get(guid));
  std::string badURL, badRef;
  for (const auto& [key, state] : m.locations) {
    if (state == librarian::state::kAlive && badURL.empty()) std::tie(badURL, badRef) = librarian::splitLocation(key);
  }
  int bad = d.shepherdIndex(badURL);
  d.backend(bad).flipBit(badRef, 12345);
  bool caught = false;
  try {
    rpc.download(d.shepherd(bad)->get(guid));
  } catch (const Error& e) {
    caught = e.is(errc::kChecksumMismatch);
  }
  net.runFor(0.5);
  auto key = librarian::locationKey(badURL, badRef);
  bool invalid = ahash::field(d.store().get(guid), librarian::section::kLocations, key) == librarian::state::kInvalid;
  rep.check("corrupted replica detected on read", caught);
  rep.check("corrupted replica marked INVALID", invalid);

  std::size_t wrong = 0, served = 0;
  for (int i = 0; i < 20; ++i) {
    try {
      if (detail::getFile(d, ln) != data) ++wrong;
      else ++served;
    } catch (const Error&) {
    }
    net.runFor(1.0);
  }

  // Silent corruption found by the periodic check.
  std::string ln2 = "/silent";
  Bytes data2 = content(seed, ln2, 65536);
  std::string guid2 = detail::putFile(d, ln2, data2, needed);
  net.runFor(5.0);
  auto m2 = librarian::fromObject(guid2, d.store().get(guid2));
  auto [url2, ref2] = librarian::splitLocation(m2.locations.begin()->first);
  d.backend(d.shepherdIndex(url2)).flipBit(ref2, 7);

  net.runFor(4 * t.checkPeriod);
  for (int i = 0; i < 5; ++i) {
    try {
      if (detail::getFile(d, ln) != data || detail::getFile(d, ln2) != data2) ++wrong;
      else ++served;
    } catch (const Error&) {
    }
  }
  rep.metric("downloadsServed", static_cast<double>(served));
  rep.check("downloads never return corrupted bytes", wrong == 0 && served > 0,
            std::to_string(wrong) + " wrong of " + std::to_string(wrong + served));
  auto after = librarian::fromObject(guid, d.store().get(guid));
  auto after2 = librarian::fromObject(guid2, d.store().get(guid2));
  bool replaced = after.count(librarian::state::kAlive) == static_cast<std::size_t>(needed) &&
                  !after.locations.count(key) &&
                  after2.count(librarian::state::kAlive) == static_cast<std::size_t>(needed) &&
                  !after2.locations.count(librarian::locationKey(url2, ref2));
  rep.check("corrupted replicas replaced", replaced);
  auto f = fsck(d, true);
  rep.check("fsck", f.ok(), f.describe());
  return rep;
}

}  // namespace chelonia::harness
