#include <gtest/gtest.h>

#include <filesystem>

#include "chelonia/ahash/client.hpp"
#include "chelonia/ahash/node.hpp"
#include "chelonia/core/errors.hpp"
#include "chelonia/hed/sim_network.hpp"

using namespace chelonia;
using namespace chelonia::ahash;

namespace {

const std::string kClientDN = "CN=client";

// n A-Hash replicas, one per simulated host, with restartable nodes.
struct Cluster {
  explicit Cluster(int n, std::uint64_t seed = 1) : net(seed), logs(n), nodes(n) {
    for (int i = 0; i < n; ++i) {
      std::string id = "a" + std::to_string(i);
      peers.push_back({id, "sim://" + id + "/AHash", "CN=ahash-" + id});
    }
    std::vector<std::string> trusted{kClientDN};
    for (const auto& p : peers) trusted.push_back(p.dn);
    for (int i = 0; i < n; ++i) {
      logs[i] = std::make_unique<MemoryLogStore>();
      auto& host = net.addHost(peers[i].id);
      host.registerService("AHash", [this, i](const hed::CallContext& ctx) {
        if (!nodes[i]) throw Error(errc::kNodeDown, peers[i].id);
        return nodes[i]->handle(ctx);
      }, peers[i].dn);
      host.setTrustedDNs("AHash", trusted);
    }
  }

  void start(int i) {
    NodeConfig cfg;
    cfg.nodeID = peers[i].id;
    cfg.peers = peers;
    nodes[i] = std::make_unique<AHashNode>(net, hed::RpcClient(net, peers[i].dn, {}, peers[i].id), *logs[i], cfg);
    nodes[i]->start();
    net.setHostDown(peers[i].id, false);
  }

  void startAll() {
    for (std::size_t i = 0; i < nodes.size(); ++i) start(static_cast<int>(i));
  }

  void kill(int i) {
    nodes[i].reset();
    net.setHostDown(peers[i].id, true);
  }

  int master() const {
    int found = -1;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i] && nodes[i]->isActingMaster()) {
        EXPECT_EQ(found, -1) << "two acting masters";
        found = static_cast<int>(i);
      }
    }
    return found;
  }

  // Runs until some node holds a master lease, or gives up.
  int awaitMaster(double limit = 60.0) {
    double end = net.loopTime() + limit;
    while (net.loopTime() < end) {
      net.runFor(0.25);
      int m = master();
      if (m >= 0) return m;
    }
    return -1;
  }

  AHashClient client(std::vector<std::string> seeds = {}) {
    if (seeds.empty()) {
      for (const auto& p : peers) seeds.push_back(p.url);
    }
    return AHashClient(hed::RpcClient(net, kClientDN), seeds);
  }

  hed::SimNetwork net;
  std::vector<Peer> peers;
  std::vector<std::unique_ptr<MemoryLogStore>> logs;
  std::vector<std::unique_ptr<AHashNode>> nodes;
};

ChangeBatch setIfAbsent(const std::string& id, const std::string& key, const std::string& value) {
  ChangeBatch b;
  b.add(ChangeRequest::set(id, "states", key, value).when(Condition::noKey("states", key)).named("c1"));
  return b;
}

std::string code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "ok";
}

}  // namespace

TEST(Store, ConditionsSeePreStateOfBatch) {
  Store s;
  ChangeBatch b;
  b.add(ChangeRequest::set("o", "s", "k", "1").when(Condition::noKey("s", "k")).named("first"));
  b.add(ChangeRequest::set("o", "s", "j", "2").when(Condition::noKey("s", "k")).named("second"));
  std::vector<ChangeRequest> effects;
  auto r = s.evaluate(b, effects);
  // Both conditions are checked before either write lands.
  EXPECT_EQ(r["first"], "applied");
  EXPECT_EQ(r["second"], "applied");
  s.apply(effects);
  EXPECT_EQ(field(s.get("o"), "s", "j"), "2");
}

TEST(Store, AtomicBatchIsAllOrNothing) {
  Store s;
  ChangeBatch b;
  b.atomic = true;
  b.add(ChangeRequest::set("o", "s", "k", "1").named("ok"));
  b.add(ChangeRequest::set("o", "s", "j", "2").when(Condition::hasKey("s", "missing")).named("bad"));
  std::vector<ChangeRequest> effects;
  auto r = s.evaluate(b, effects);
  EXPECT_EQ(r["ok"], "failed");
  EXPECT_EQ(r["bad"], "condition-failed");
  EXPECT_TRUE(effects.empty());
}

TEST(Store, EmptyObjectIsAbsent) {
  Store s;
  s.apply({ChangeRequest::set("o", "s", "k", "v")});
  s.apply({ChangeRequest::unset("o", "s", "k")});
  EXPECT_FALSE(s.contains("o"));
  EXPECT_TRUE(s.get("o").empty());
  Condition differs = Condition::differs("s", "k", "v");
  EXPECT_TRUE(differs.holds(s.get("o")));
}

TEST(AHash, CentralizedReadWrite) {
  Cluster c(1);
  c.startAll();
  ASSERT_EQ(c.awaitMaster(5), 0);
  auto client = c.client();
  EXPECT_TRUE(client.get("unknown").empty());
  auto out = client.change(setIfAbsent("f1", "size", "119537664"));
  EXPECT_TRUE(out.applied("c1"));
  out = client.change(setIfAbsent("f1", "size", "119537664"));
  EXPECT_EQ(out.results["c1"], "condition-failed");
  EXPECT_EQ(field(client.get("f1"), "states", "size"), "119537664");
  EXPECT_EQ(client.nodeURLs().size(), 1u);
}

TEST(AHash, ThreeNodesElectReplicateAndConverge) {
  Cluster c(3);
  c.startAll();
  int m = c.awaitMaster();
  ASSERT_GE(m, 0);
  c.net.runFor(2);
  auto client = c.client();
  for (int i = 0; i < 20; ++i) {
    auto out = client.change(setIfAbsent("obj" + std::to_string(i), "k", "v"));
    ASSERT_TRUE(out.allApplied());
  }
  c.net.runFor(3);
  EXPECT_EQ(c.nodes[0]->canonical(), c.nodes[1]->canonical());
  EXPECT_EQ(c.nodes[1]->canonical(), c.nodes[2]->canonical());
  EXPECT_EQ(c.nodes[0]->lastAppliedSeq(), c.nodes[m]->lastAppliedSeq());
  hed::RpcClient raw(c.net, kClientDN);
  EXPECT_EQ(raw.call(c.peers[0].url, "getNodeList").at("nodes").size(), 3u);
}

TEST(AHash, ChangeOnClientReturnsMasterHint) {
  Cluster c(3);
  c.startAll();
  int m = c.awaitMaster();
  ASSERT_GE(m, 0);
  int other = (m + 1) % 3;
  hed::RpcClient raw(c.net, kClientDN);
  try {
    raw.call(c.peers[other].url, "change", toValue(setIfAbsent("x", "k", "v")));
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.is(errc::kNotMaster));
    EXPECT_EQ(e.detail().value("master", std::string()), c.peers[m].url);
  }
}

TEST(AHash, ReplicateChecksSenderAndSequence) {
  Cluster c(3);
  c.startAll();
  int m = c.awaitMaster();
  ASSERT_GE(m, 0);
  int other = (m + 1) % 3;
  auto status = c.nodes[other]->status();
  LogEntry e{status.seq + 3, status.currentTerm, {ChangeRequest::set("o", "s", "k", "v")}};
  Value msg = {{"term", status.currentTerm}, {"master", c.peers[m].id}, {"prevSeq", status.seq + 2},
               {"prevTerm", status.currentTerm}, {"entries", Value::array({toValue(e)})}};
  hed::RpcClient asMaster(c.net, c.peers[m].dn);
  try {
    asMaster.call(c.peers[other].url, "replicate", msg);
    FAIL();
  } catch (const Error& err) {
    EXPECT_TRUE(err.is(errc::kGapDetected));
    EXPECT_EQ(err.detail().value("seq", std::uint64_t{0}), status.seq);
  }
  int third = (m + 2) % 3;
  hed::RpcClient notMaster(c.net, c.peers[third].dn);
  EXPECT_EQ(code([&] { notMaster.call(c.peers[other].url, "replicate", msg); }), errc::kNotFromMaster);
}

TEST(AHash, WinnerHasHighestSeqThenHighestId) {
  // Every assignment of seqs from {0,1,2} to three nodes.
  for (int code = 0; code < 27; ++code) {
    int seqs[3] = {code % 3, (code / 3) % 3, code / 9};
    Cluster c(3, 100 + code);
    for (int i = 0; i < 3; ++i) {
      for (int s = 1; s <= seqs[i]; ++s) {
        c.logs[i]->append({static_cast<std::uint64_t>(s), 1, {ChangeRequest::set("o", "s", "k", std::to_string(s))}});
      }
      c.logs[i]->saveTerms(1, 1);
    }
    int expected = 0;
    for (int i = 1; i < 3; ++i) {
      if (seqs[i] >= seqs[expected]) expected = i;
    }
    c.startAll();
    EXPECT_EQ(c.awaitMaster(), expected) << seqs[0] << "," << seqs[1] << "," << seqs[2];
  }
}

TEST(AHash, MasterKilledHigherSeqWins) {
  Cluster c(3);
  c.startAll();
  ASSERT_EQ(c.awaitMaster(), 2);  // equal seqs: highest id
  auto client = c.client();
  for (int i = 0; i < 5; ++i) ASSERT_TRUE(client.change(setIfAbsent("o" + std::to_string(i), "k", "v")).allApplied());
  // a0 misses the last write.
  c.net.setHostDown("a0", true);
  ASSERT_TRUE(client.change(setIfAbsent("late", "k", "v")).allApplied());
  auto s1 = c.nodes[1]->lastAppliedSeq();
  EXPECT_EQ(c.nodes[0]->lastAppliedSeq() + 1, s1);
  c.kill(2);
  c.net.setHostDown("a0", false);
  int m = c.awaitMaster();
  EXPECT_EQ(m, 1);
  EXPECT_FALSE(client.get("late").empty());
}

TEST(AHash, WritesBlockedDuringElectionReadsServed) {
  Cluster c(3);
  c.startAll();
  int m = c.awaitMaster();
  ASSERT_GE(m, 0);
  auto client = c.client();
  ASSERT_TRUE(client.change(setIfAbsent("before", "k", "v")).allApplied());
  c.kill(m);
  c.net.runFor(1);
  EXPECT_EQ(code([&] { client.change(setIfAbsent("during", "k", "v")); }), errc::kAHashUnavailable);
  EXPECT_FALSE(client.get("before").empty());
  int m2 = c.awaitMaster();
  ASSERT_GE(m2, 0);
  EXPECT_NE(m2, m);
  EXPECT_TRUE(client.change(setIfAbsent("after", "k", "v")).allApplied());
}

TEST(AHash, NoMajorityKeepsWritesBlocked) {
  Cluster c(3);
  c.startAll();
  int m = c.awaitMaster();
  ASSERT_GE(m, 0);
  c.kill((m + 1) % 3);
  c.kill((m + 2) % 3);
  c.net.runFor(30);
  EXPECT_EQ(c.master(), -1);
  auto client = c.client({c.peers[m].url});
  EXPECT_EQ(code([&] { client.change(setIfAbsent("x", "k", "v")); }), errc::kAHashUnavailable);
  EXPECT_NO_THROW(client.get("x"));
}

TEST(AHash, RestartedReplicaCatchesUp) {
  Cluster c(3);
  c.startAll();
  int m = c.awaitMaster();
  ASSERT_GE(m, 0);
  int r = (m + 1) % 3;
  c.kill(r);
  auto client = c.client();
  for (int i = 0; i < 10; ++i) ASSERT_TRUE(client.change(setIfAbsent("o" + std::to_string(i), "k", "v")).allApplied());
  c.start(r);
  c.net.runFor(5);
  EXPECT_EQ(c.nodes[r]->lastAppliedSeq(), c.nodes[m]->lastAppliedSeq());
  EXPECT_EQ(c.nodes[r]->canonical(), c.nodes[m]->canonical());
}

TEST(AHash, DeposedMasterWritesDiscardedOnRejoin) {
  Cluster c(3);
  c.startAll();
  int m = c.awaitMaster();
  ASSERT_GE(m, 0);
  auto toOld = c.client({c.peers[m].url});
  ASSERT_TRUE(toOld.change(setIfAbsent("base", "k", "v")).allApplied());
  std::vector<std::string> rest;
  for (int i = 0; i < 3; ++i) {
    if (i != m) rest.push_back(c.peers[i].id);
  }
  c.net.setPartition({{c.peers[m].id}, rest});
  // The isolated master applies locally but cannot get confirmation.
  EXPECT_EQ(code([&] { toOld.change(setIfAbsent("lost", "k", "v")); }), errc::kAHashUnavailable);
  EXPECT_FALSE(c.nodes[m]->read("lost").empty());
  int m2 = c.awaitMaster();
  ASSERT_GE(m2, 0);
  ASSERT_NE(m2, m);
  auto toNew = c.client({c.peers[m2].url});
  ASSERT_TRUE(toNew.change(setIfAbsent("kept", "k", "v")).allApplied());
  ASSERT_TRUE(toNew.change(setIfAbsent("kept2", "k", "v")).allApplied());
  c.net.healPartition();
  c.net.runFor(5);
  EXPECT_TRUE(c.nodes[m]->read("lost").empty());
  EXPECT_EQ(c.nodes[m]->canonical(), c.nodes[m2]->canonical());
}

TEST(AHash, MembershipChangeReachesEveryReplica) {
  Cluster c(3);
  c.startAll();
  ASSERT_GE(c.awaitMaster(), 0);
  c.net.runFor(2);
  auto client = c.client();
  ChangeBatch b;
  b.add(ChangeRequest::set(kNodeListID, "nodes", "a9", "sim://a9/AHash"));
  b.add(ChangeRequest::set(kNodeListID, "dns", "a9", "CN=ahash-a9"));
  // A fourth node that never answers: majority becomes 3 of 4.
  ASSERT_TRUE(client.change(b).allApplied());
  c.net.runFor(2);
  hed::RpcClient raw(c.net, kClientDN);
  for (const auto& p : c.peers) EXPECT_EQ(raw.call(p.url, "getNodeList").at("nodes").size(), 4u);
}

TEST(AHash, ClientFollowsHintAndFailsOver) {
  Cluster c(3);
  c.startAll();
  int m = c.awaitMaster();
  ASSERT_GE(m, 0);
  int other = (m + 1) % 3;
  auto client = c.client({c.peers[other].url});
  client.get("warm-up");
  EXPECT_EQ(client.nodeURLs().size(), 3u);
  auto before = c.net.stats().messageCount;
  ASSERT_TRUE(client.change(setIfAbsent("x", "k", "v")).allApplied());
  EXPECT_EQ(client.masterHint(), c.peers[m].url);
  // Hint hop (2) + change (2) + two replica confirmations (4).
  EXPECT_EQ(c.net.stats().messageCount - before, 8u);
  EXPECT_FALSE(client.get("x").empty());
  c.kill(other);
  EXPECT_FALSE(client.get("x").empty());
}

TEST(AHash, FileLogSurvivesRestartAndCompaction) {
  auto dir = std::filesystem::temp_directory_path() / ("ahash-log-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::string image;
  std::uint64_t seq;
  {
    hed::SimNetwork net;
    net.addHost("solo");
    FileLogStore log(dir);
    NodeConfig cfg;
    cfg.nodeID = "solo";
    cfg.peers = {{"solo", "sim://solo/AHash", "CN=solo"}};
    cfg.snapshotEvery = 7;
    AHashNode node(net, hed::RpcClient(net, "CN=solo"), log, cfg);
    net.host("solo").registerService("AHash", [&](const hed::CallContext& ctx) { return node.handle(ctx); }, "CN=solo");
    net.host("solo").setTrustedDNs("AHash", {kClientDN});
    node.start();
    net.runFor(1);
    AHashClient client(hed::RpcClient(net, kClientDN), {"sim://solo/AHash"});
    for (int i = 0; i < 30; ++i) ASSERT_TRUE(client.change(setIfAbsent("o" + std::to_string(i), "k", "v")).allApplied());
    image = node.canonical();
    seq = node.lastAppliedSeq();
  }
  hed::SimNetwork net;
  FileLogStore log(dir);
  NodeConfig cfg;
  cfg.nodeID = "solo";
  cfg.peers = {{"solo", "sim://solo/AHash", "CN=solo"}};
  AHashNode node(net, hed::RpcClient(net, "CN=solo"), log, cfg);
  EXPECT_EQ(node.lastAppliedSeq(), seq);
  EXPECT_EQ(node.canonical(), image);
  std::filesystem::remove_all(dir);
}
