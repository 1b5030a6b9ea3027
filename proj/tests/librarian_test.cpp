#include <gtest/gtest.h>

#include "chelonia/core/errors.hpp"
#include "chelonia/harness/deployment.hpp"

using namespace chelonia;
using namespace chelonia::librarian;
using ahash::ChangeBatch;
using ahash::ChangeRequest;
using ahash::Condition;
using harness::Deployment;
using harness::Topology;

namespace {

const std::string kShepURL = "sim://s9/Shepherd";

Topology small(int ahashNodes = 1, int librarians = 1) {
  Topology t;
  t.ahashNodes = ahashNodes;
  t.librarians = librarians;
  t.bartenders = 0;
  return t;
}

std::string code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "ok";
}

Value fileTemplate(int needed = 4) {
  return {{"type", "file"},
          {"states", {{"size", 114000000}, {"checksum", "ab"}, {"checksumType", "sha256"}, {"neededReplicas", needed}}}};
}

// Creates `name` under `parent` the way a bartender would.
std::string addChild(Librarian& lib, const std::string& parent, const std::string& name, const Value& tmpl) {
  std::string guid = lib.newEntry(tmpl);
  ChangeBatch b;
  b.add(ChangeRequest::set(parent, section::kEntries, name, guid).when(Condition::noKey(section::kEntries, name)));
  EXPECT_EQ(lib.modifyMetadata(b).begin()->second, ahash::kApplied);
  return guid;
}

// Registers a location and its index entry, as a shepherd's put does.
void addLocation(Librarian& lib, const std::string& guid, const std::string& ref, const std::string& st) {
  ChangeBatch b;
  b.add(ChangeRequest::set(guid, section::kLocations, locationKey(kShepURL, ref), st));
  b.add(ChangeRequest::set(locationIndexID(kShepURL), "refs", ref, guid));
  lib.modifyMetadata(b);
}

std::string locState(Librarian& lib, const std::string& guid, const std::string& ref) {
  auto m = lib.getMetadata({guid});
  return ahash::field(m[guid], section::kLocations, locationKey(kShepURL, ref));
}

}  // namespace

TEST(Metadata, LogicalNamesAndPolicyRules) {
  EXPECT_EQ(splitLN("/user/me/orange.jpg"), (std::vector<std::string>{"user", "me", "orange.jpg"}));
  EXPECT_TRUE(splitLN("/").empty());
  EXPECT_EQ(code([] { splitLN("user/me"); }), errc::kInvalidName);
  EXPECT_EQ(code([] { splitLN("/a//b"); }), errc::kInvalidName);
  auto r = PolicyRule::parse("deny CN=Some One,O=Grid read,addEntry");
  EXPECT_FALSE(r.allow);
  EXPECT_EQ(r.identity, "CN=Some One,O=Grid");
  EXPECT_EQ(r.actions, (std::set<std::string>{"read", "addEntry"}));
  EXPECT_EQ(PolicyRule::parse(r.toString()).toString(), r.toString());
  EXPECT_EQ(code([] { PolicyRule::parse("allow ANY fly"); }), errc::kBadRequest);
  EXPECT_EQ(formatTime(1.5).size(), formatTime(86400.25).size());
}

TEST(Librarian, RootIsCreatedOnceWithFixedGUID) {
  Deployment d(small(1, 2));
  d.start();
  auto store = d.store();
  const auto& root = store.get(kRootGUID);
  EXPECT_EQ(ahash::field(root, section::kEntry, "type"), "collection");
  int entries = 0;
  for (const auto& [_, obj] : store.objects()) entries += isEntry(obj);
  EXPECT_EQ(entries, 1);
}

TEST(Librarian, NewEntryAndGetMetadata) {
  Deployment d(small());
  d.start();
  auto& lib = *d.librarian(0);
  std::string g1 = lib.newEntry(fileTemplate(4));
  EXPECT_EQ(g1.size(), 32u);
  auto m = fromObject(g1, lib.getMetadata({g1})[g1]);
  EXPECT_EQ(m.type, EntryType::kFile);
  EXPECT_EQ(m.neededReplicas, 4);
  EXPECT_EQ(m.size, 114000000u);
  EXPECT_TRUE(m.locations.empty());

  std::string gc = lib.newEntry({{"type", "collection"}});
  EXPECT_NE(gc, g1);
  auto c = fromObject(gc, lib.getMetadata({gc})[gc]);
  EXPECT_EQ(c.type, EntryType::kCollection);
  EXPECT_TRUE(c.entries.empty());

  EXPECT_TRUE(lib.getMetadata({"ffffffffffffffffffffffffffffffff"}).empty());
  EXPECT_EQ(code([&] { lib.newEntry(fileTemplate(0)); }), errc::kBadRequest);
  EXPECT_EQ(code([&] { lib.newEntry({{"type", "mountpoint"}, {"mountURL", ""}}); }), errc::kBadRequest);
}

TEST(Librarian, ConditionalLinkDetectsTakenName) {
  Deployment d(small());
  d.start();
  auto& lib = *d.librarian(0);
  std::string user = addChild(lib, kRootGUID, "user", {{"type", "collection"}});
  std::string me = addChild(lib, user, "me", {{"type", "collection"}});
  std::string g1 = lib.newEntry(fileTemplate());
  ChangeBatch b;
  b.add(ChangeRequest::set(me, section::kEntries, "orange.jpg", g1).when(Condition::noKey(section::kEntries, "orange.jpg")));
  EXPECT_EQ(lib.modifyMetadata(b).at("0"), ahash::kApplied);
  EXPECT_EQ(lib.modifyMetadata(b).at("0"), ahash::kConditionFailed);
}

TEST(Librarian, TraverseResolvesStopsAndReportsRemainder) {
  Deployment d(small());
  d.start();
  auto& lib = *d.librarian(0);
  std::string user = addChild(lib, kRootGUID, "user", {{"type", "collection"}});
  std::string me = addChild(lib, user, "me", {{"type", "collection"}});
  std::string g1 = addChild(lib, me, "orange.jpg", fileTemplate());

  auto r = lib.traverseLN("/user/me/orange.jpg");
  ASSERT_TRUE(r.resolved());
  ASSERT_EQ(r.path.size(), 4u);  // root plus three names
  EXPECT_EQ(r.path[1].guid, user);
  EXPECT_EQ(r.path[3].guid, g1);
  EXPECT_EQ(ahash::field(r.metadata, section::kEntry, "type"), "file");

  auto missing = lib.traverseLN("/user/you/x");
  EXPECT_EQ(missing.remainder, "you/x");
  EXPECT_EQ(missing.terminal().guid, user);
  EXPECT_TRUE(missing.metadata.empty());

  std::string my = addChild(lib, kRootGUID, "my", {{"type", "collection"}});
  addChild(lib, my, "dCache", {{"type", "mountpoint"}, {"mountURL", "ext://dcache.example"}});
  auto m = lib.traverseLN("/my/dCache/fruits/apple.jpg");
  EXPECT_EQ(m.terminal().type, EntryType::kMountpoint);
  EXPECT_EQ(m.terminal().mountURL, "ext://dcache.example");
  EXPECT_EQ(m.remainder, "fruits/apple.jpg");

  // The wire form round-trips.
  auto back = traverseFromValue(toValue(r));
  EXPECT_EQ(back.path.size(), 4u);
  EXPECT_EQ(back.metadata, r.metadata);
}

TEST(Librarian, TraversalCostsOneLookupPerLevel) {
  Deployment d(small());
  d.start();
  auto& lib = *d.librarian(0);
  auto rpc = d.client("CN=bartender-b0");
  d.net().host(Deployment::librarianHost(0)).setTrustedDNs("Librarian", {"CN=bartender-b0"});
  std::string parent = kRootGUID;
  std::string ln;
  lib.traverseLN("/");  // warms the client's node list
  for (int depth = 1; depth <= 12; ++depth) {
    ln += "/c" + std::to_string(depth);
    parent = addChild(lib, parent, "c" + std::to_string(depth), {{"type", "collection"}});
    auto before = d.net().stats();
    rpc.call(d.librarianURLs()[0], "traverseLN", {{"ln", ln}});
    auto delta = d.net().stats() - before;
    // Caller <-> librarian, plus one A-Hash get per level and the root.
    EXPECT_EQ(delta.messageCount, 2u + 2u * (depth + 1)) << "depth " << depth;
  }
}

TEST(Librarian, ReportRegistersAndAdvancesHeartbeat) {
  Deployment d(small());
  d.start();
  auto& lib = *d.librarian(0);
  EXPECT_TRUE(lib.listShepherds().empty());
  double t0 = d.net().now();
  Value r = lib.report(kShepURL, "CN=shepherd-s9", {});
  double deadline = r.at("nextDeadline").get<double>();
  EXPECT_GE(deadline, t0 + 60.0);
  EXPECT_LE(deadline, d.net().now() + 60.0);
  EXPECT_FALSE(r.at("resync").get<bool>());
  auto shepherds = lib.listShepherds();
  ASSERT_EQ(shepherds.size(), 1u);
  EXPECT_EQ(shepherds[0].url, kShepURL);
  EXPECT_EQ(shepherds[0].dn, "CN=shepherd-s9");
  EXPECT_TRUE(shepherds[0].alive);
  double first = shepherds[0].lastHeartbeat;
  d.net().runFor(10);
  lib.report(kShepURL, "CN=shepherd-s9", {});
  EXPECT_GT(lib.listShepherds()[0].lastHeartbeat, first);
}

TEST(Librarian, ReportAppliesStateChangesAndFlagsUnknownReplicas) {
  Deployment d(small());
  d.start();
  auto& lib = *d.librarian(0);
  std::string g1 = lib.newEntry(fileTemplate());
  addLocation(lib, g1, "r7", "CREATING");
  Value r = lib.report(kShepURL, "CN=s", {{"r7", g1, "ALIVE"}, {"r8", g1, "ALIVE"}});
  EXPECT_EQ(locState(lib, g1, "r7"), "ALIVE");
  EXPECT_EQ(locState(lib, g1, "r8"), "");
  EXPECT_EQ(r.at("unknown"), Value::array({"r8"}));

  lib.report(kShepURL, "CN=s", {{"r7", g1, "DELETED"}});
  EXPECT_EQ(locState(lib, g1, "r7"), "");
  EXPECT_TRUE(d.store().get(locationIndexID(kShepURL)).empty());
}

TEST(Librarian, LateShepherdIsMarkedOfflineExactlyOnce) {
  Topology t = small(1, 2);
  t.monitorPeriod = 1e9;  // drive checkShepherds by hand
  Deployment d(t);
  d.start();
  auto& lib = *d.librarian(0);
  auto& other = *d.librarian(1);
  std::vector<std::string> guids;
  for (int i = 0; i < 8; ++i) {
    guids.push_back(lib.newEntry(fileTemplate()));
    addLocation(lib, guids.back(), "r" + std::to_string(i), i == 7 ? "CREATING" : "ALIVE");
  }
  lib.report(kShepURL, "CN=s", {});

  d.net().runFor(100);
  EXPECT_TRUE(lib.checkShepherds().empty()) << "within deadline + grace";
  d.net().runFor(30);
  EXPECT_EQ(lib.checkShepherds(), std::vector<std::string>{kShepURL});
  EXPECT_TRUE(other.checkShepherds().empty());
  for (int i = 0; i < 8; ++i) EXPECT_EQ(locState(lib, guids[i], "r" + std::to_string(i)), "OFFLINE");
  EXPECT_FALSE(lib.listShepherds()[0].alive);

  // The shepherd comes back and restates its replicas.
  Value r = lib.report(kShepURL, "CN=s", {{"r0", guids[0], "ALIVE"}});
  EXPECT_TRUE(r.at("resync").get<bool>());
  EXPECT_EQ(locState(lib, guids[0], "r0"), "ALIVE");
  EXPECT_EQ(locState(lib, guids[1], "r1"), "OFFLINE");
  EXPECT_TRUE(lib.listShepherds()[0].alive);
  EXPECT_FALSE(lib.report(kShepURL, "CN=s", {}).at("resync").get<bool>());
}

TEST(Librarian, ConcurrentMarkingByTwoLibrariansAppliesOnce) {
  Topology t = small(1, 2);
  t.monitorPeriod = 5;
  Deployment d(t);
  d.start();
  auto& lib = *d.librarian(0);
  std::string g = lib.newEntry(fileTemplate());
  addLocation(lib, g, "r0", "ALIVE");
  lib.report(kShepURL, "CN=s", {});
  auto seqBefore = d.ahash(0)->lastAppliedSeq();
  d.net().runFor(200);
  EXPECT_EQ(locState(lib, g, "r0"), "OFFLINE");
  // Both librarians kept checking every 5 s, but only one batch landed.
  EXPECT_EQ(d.ahash(0)->lastAppliedSeq(), seqBefore + 1);
}

TEST(Librarian, StatelessAcrossRestartsAndInstances) {
  Deployment d(small(1, 2));
  d.start();
  auto& lib = *d.librarian(0);
  std::string a = addChild(lib, kRootGUID, "a", {{"type", "collection"}});
  addChild(lib, a, "f", fileTemplate());
  auto before = toValue(lib.traverseLN("/a/f"));
  d.killLibrarian(0);
  d.startLibrarian(0);
  EXPECT_EQ(toValue(d.librarian(0)->traverseLN("/a/f")), before);
  EXPECT_EQ(toValue(d.librarian(1)->traverseLN("/a/f")), before);
}

TEST(Librarian, SurvivesLossOfItsAHashReplica) {
  Deployment d(small(3));
  d.start();
  auto& lib = *d.librarian(0);
  addChild(lib, kRootGUID, "a", {{"type", "collection"}});
  int master = d.ahashMaster();
  // Kill a replica that is not the master; reads and writes carry on.
  int victim = (master + 1) % 3;
  d.killAHash(victim);
  EXPECT_TRUE(lib.traverseLN("/a").resolved());
  addChild(lib, kRootGUID, "b", {{"type", "collection"}});
  EXPECT_TRUE(lib.traverseLN("/b").resolved());
  auto nodes = lib.ahash().nodeURLs();
  EXPECT_EQ(nodes.size(), 3u);
}

TEST(Librarian, WritesFailFastDuringElection) {
  Deployment d(small(3));
  d.start();
  auto& lib = *d.librarian(0);
  lib.traverseLN("/");
  d.killAHash(d.ahashMaster());
  EXPECT_EQ(code([&] { lib.newEntry({{"type", "collection"}}); }), errc::kAHashUnavailable);
  // Reads are still served by the surviving replicas.
  EXPECT_TRUE(lib.traverseLN("/").resolved());
  ASSERT_GE(d.awaitMaster(), 0);
  EXPECT_EQ(lib.newEntry({{"type", "collection"}}).size(), 32u);
}
