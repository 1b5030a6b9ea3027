#include <gtest/gtest.h>

#include "support.hpp"

using namespace chelonia;
using bartender::allowAll;
using bartender::effectivePolicy;
using bartender::permits;
using harness::Deployment;
using harness::Topology;
using librarian::PolicyRule;
using testsupport::code;
using testsupport::pattern;

namespace {

const std::string kEve = "CN=eve";

Topology cluster(int shepherds) {
  Topology t;
  t.shepherds = shepherds;
  t.heartbeatPeriod = 10;
  t.grace = 10;
  t.monitorPeriod = 5;
  t.checkPeriod = 30;
  return t;
}

class Session {
 public:
  Session(Deployment& d, const std::string& dn = harness::kUserDN) : d_(d), rpc_(d.client(dn)) {}
  Value call(const std::string& op, const Value& args) { return rpc_.call(d_.bartenderURLs()[0], op, args); }
  Value mkdir(const std::string& ln, const librarian::Policy& p = {}) {
    return call("makeCollection", {{"ln", ln}, {"policy", librarian::toValue(p)}});
  }
  std::map<std::string, std::string> ls(const std::string& ln) {
    std::map<std::string, std::string> out;
    Value entries = call("list", {{"ln", ln}}).at("entries");
    for (const auto& [name, e] : entries.items()) out[name] = e.at("type");
    return out;
  }

 private:
  Deployment& d_;
  hed::RpcClient rpc_;
};

}  // namespace

TEST(Policy, FirstMatchingRuleDecides) {
  librarian::Policy p{PolicyRule::parse("deny CN=eve addEntry"), PolicyRule::parse("allow ANY read,addEntry")};
  EXPECT_TRUE(permits(p, "CN=bob", "addEntry"));
  EXPECT_FALSE(permits(p, kEve, "addEntry"));
  EXPECT_TRUE(permits(p, kEve, "read"));
  EXPECT_FALSE(permits(p, "CN=bob", "removeEntry"));  // no rule: denied
  EXPECT_FALSE(permits({}, "CN=bob", "read"));
}

TEST(Policy, EmptyPolicyInheritsFromNearestAncestor) {
  librarian::Policy strict{PolicyRule::parse("allow CN=bob read")};
  std::vector<librarian::PathElement> path(3);
  path[1].policy = strict;
  auto fallback = allowAll();
  EXPECT_EQ(&effectivePolicy(path, 2, fallback), &path[1].policy);
  EXPECT_EQ(&effectivePolicy(path, 0, fallback), &fallback);
}

TEST(Bartender, CollectionsAndNames) {
  Deployment d(cluster(1));
  d.start();
  Session s(d);
  s.mkdir("/user");
  s.mkdir("/user/me");
  EXPECT_EQ(code([&] { s.mkdir("/user"); }), errc::kNameTaken);
  EXPECT_EQ(code([&] { s.mkdir("/nope/x"); }), errc::kParentMissing);
  EXPECT_EQ(code([&] { s.mkdir("relative"); }), errc::kInvalidName);
  testsupport::putFile(d, "/user/me/orange.jpg", pattern(100));
  EXPECT_EQ(code([&] { s.mkdir("/user/me/orange.jpg/x"); }), errc::kNotACollection);
  EXPECT_EQ(s.ls("/user/me"), (std::map<std::string, std::string>{{"orange.jpg", "file"}}));
  EXPECT_EQ(s.ls("/"), (std::map<std::string, std::string>{{"user", "collection"}}));
  EXPECT_EQ(code([&] { s.ls("/user/me/orange.jpg"); }), errc::kNotACollection);

  Value st = s.call("stat", {{"ln", "/user/me/orange.jpg"}});
  EXPECT_EQ(st.at("type"), "file");
  auto m = librarian::fromObject(st.at("guid"), ahash::objectFromValue(st.at("metadata")));
  EXPECT_EQ(m.size, 100u);
  EXPECT_EQ(code([&] { s.call("stat", {{"ln", "/user/you"}}); }), errc::kNotFound);

  EXPECT_EQ(code([&] { s.call("unmakeCollection", {{"ln", "/user/me"}}); }), errc::kNotEmpty);
  EXPECT_EQ(code([&] { s.call("delFile", {{"ln", "/user/me"}}); }), errc::kIsCollection);
  s.call("delFile", {{"ln", "/user/me/orange.jpg"}});
  s.call("unmakeCollection", {{"ln", "/user/me"}});
  EXPECT_TRUE(s.ls("/user").empty());
}

TEST(Bartender, EmptyCollectionStatHasEntries) {
  Deployment d(cluster(1));
  d.start();
  Session s(d);
  s.mkdir("/empty");
  Value st = s.call("stat", {{"ln", "/empty"}});
  ASSERT_TRUE(st.at("metadata").contains("entries"));
  EXPECT_TRUE(st.at("metadata").at("entries").empty());
}

TEST(Bartender, PutGetRoundTripWithoutProxying) {
  Deployment d(cluster(2));
  d.start();
  auto data = pattern(1 << 20);
  testsupport::putFile(d, "/big", data);
  auto before = d.net().stats();
  Value g = Session(d).call("getFile", {{"ln", "/big"}});
  auto control = d.net().stats() - before;
  EXPECT_FALSE(g.at("external").get<bool>());
  EXPECT_EQ(g.at("size").get<std::uint64_t>(), data.size());
  // Asking for the file moves only metadata, a tiny fraction of the file.
  EXPECT_LT(control.bytesSent, data.size() / 100);
  EXPECT_EQ(d.client().download(g.at("url")), data);
}

TEST(Bartender, PolicyIsEnforced) {
  Deployment d(cluster(1));
  d.start();
  Session user(d), eve(d, kEve);
  user.mkdir("/home", {PolicyRule::parse("allow CN=user read,addEntry,removeEntry,modifyPolicy"),
                       PolicyRule::parse("allow ANY read")});
  user.mkdir("/home/docs");  // inherits /home's policy
  EXPECT_EQ(code([&] { eve.mkdir("/home/mine"); }), errc::kAccessDenied);
  EXPECT_EQ(code([&] { eve.mkdir("/home/docs/mine"); }), errc::kAccessDenied);
  EXPECT_TRUE(eve.ls("/home").count("docs"));
  eve.mkdir("/public");  // the root allows everyone
  EXPECT_EQ(code([&] { eve.call("setPolicy", {{"ln", "/home"}, {"policy", Value::array()}}); }), errc::kAccessDenied);
  user.call("setPolicy", {{"ln", "/home/docs"}, {"policy", librarian::toValue({PolicyRule::parse("allow CN=user read")})}});
  EXPECT_EQ(code([&] { eve.ls("/home/docs"); }), errc::kAccessDenied);
  // Only shepherds may ask for new replicas.
  EXPECT_EQ(code([&] { eve.call("addReplica", {{"guid", "00"}}); }), errc::kUntrusted);
}

TEST(Bartender, NewFilesGoToLeastUsedShepherd) {
  Deployment d(cluster(5));
  d.start();
  for (int i = 0; i < 40; ++i) testsupport::putFile(d, "/f" + std::to_string(i), pattern(1000, i));
  for (int i = 0; i < 5; ++i) EXPECT_EQ(d.backend(i).used(), 8000u) << i;
}

TEST(Bartender, MountpointsRedirectOutside) {
  Deployment d(cluster(1));
  d.start();
  Session s(d);
  s.mkdir("/my");
  s.call("mount", {{"ln", "/my/dCache"}, {"url", "https://dcache.example/data"}});
  Value g = s.call("getFile", {{"ln", "/my/dCache/fruits/apple.jpg"}});
  EXPECT_TRUE(g.at("external").get<bool>());
  EXPECT_EQ(g.at("url"), "https://dcache.example/data/fruits/apple.jpg");
  Value st = s.call("stat", {{"ln", "/my/dCache/fruits"}});
  EXPECT_EQ(st.at("type"), "external");
  EXPECT_EQ(s.ls("/my"), (std::map<std::string, std::string>{{"dCache", "mountpoint"}}));
}

TEST(Bartender, MoveRenamesAndRefusesCycles) {
  Deployment d(cluster(1));
  d.start();
  Session s(d);
  s.mkdir("/a");
  s.mkdir("/b");
  s.mkdir("/a/sub");
  auto data = pattern(300);
  testsupport::putFile(d, "/a/f", data);
  s.call("move", {{"src", "/a/f"}, {"dst", "/b"}});
  EXPECT_EQ(testsupport::getFile(d, "/b/f"), data);
  s.call("move", {{"src", "/b/f"}, {"dst", "/b/g"}});
  EXPECT_EQ(s.ls("/b"), (std::map<std::string, std::string>{{"g", "file"}}));
  EXPECT_EQ(code([&] { s.call("move", {{"src", "/a"}, {"dst", "/a/sub/x"}}); }), errc::kBadRequest);
  testsupport::putFile(d, "/b/h", data);
  EXPECT_EQ(code([&] { s.call("move", {{"src", "/b/g"}, {"dst", "/b/h"}}); }), errc::kNameTaken);
  EXPECT_EQ(code([&] { s.call("move", {{"src", "/nope"}, {"dst", "/b/z"}}); }), errc::kNotFound);
}

TEST(Bartender, DeleteDropsReplicasAndTickets) {
  Deployment d(cluster(2));
  d.start();
  auto data = pattern(500);
  testsupport::putFile(d, "/f", data, 2);
  d.net().runFor(1);
  Value g = Session(d).call("getFile", {{"ln", "/f"}});
  Session(d).call("delFile", {{"ln", "/f"}});
  EXPECT_EQ(d.backend(0).used() + d.backend(1).used(), 0u);
  EXPECT_EQ(code([&] { d.client().download(g.at("url")); }), errc::kTicketInvalid);
  EXPECT_EQ(code([&] { testsupport::getFile(d, "/f"); }), errc::kNotFound);
}

TEST(Bartender, PutWithoutShepherdsLeavesNoEntry) {
  Deployment d(cluster(0));
  d.start();
  EXPECT_EQ(code([&] { testsupport::putFile(d, "/f", pattern(10)); }), errc::kNoShepherdAvailable);
  EXPECT_TRUE(Session(d).ls("/").empty());
}

TEST(Bartender, AddReplicaOnlyWhenUnderReplicated) {
  Deployment d(cluster(2));
  d.start();
  auto& b = *d.bartender(0);
  std::string guid = testsupport::putFile(d, "/f", pattern(500), 2);
  d.net().runFor(1);
  EXPECT_EQ(code([&] { b.addReplica(guid); }), errc::kNotUnderReplicated);
  ahash::ChangeBatch more;
  more.add(ahash::ChangeRequest::set(guid, librarian::section::kStates, "neededReplicas", "3"));
  d.librarian(0)->modifyMetadata(more);
  // Both shepherds already hold it.
  EXPECT_EQ(code([&] { b.addReplica(guid); }), errc::kNoEligibleShepherd);
  EXPECT_EQ(code([&] { b.addReplica("ffffffffffffffffffffffffffffffff"); }), errc::kNotFound);
}

TEST(Bartender, ConcurrentRepairsRegisterOneReplica) {
  Deployment d(cluster(4));
  d.start();
  auto& b = *d.bartender(0);
  std::string guid = testsupport::putFile(d, "/f", pattern(500), 1);
  d.net().runFor(1);
  ahash::ChangeBatch more;
  more.add(ahash::ChangeRequest::set(guid, librarian::section::kStates, "neededReplicas", "2"));
  d.librarian(0)->modifyMetadata(more);
  // Two holders both see one missing replica and ask at the same moment:
  // the second request finds the claim already used.
  auto m = librarian::fromObject(guid, d.store().get(guid));
  std::string staleClaim = m.repairClaim;
  Value first = b.addReplica(guid);
  std::string other;
  for (const auto& url : d.shepherdURLs()) {
    if (url != first.at("shepherd") && testsupport::locations(d, guid).count(url) == 0) other = url;
  }
  auto* s = d.shepherd(d.shepherdIndex(other));
  EXPECT_EQ(code([&] { s->put(guid, 500, m.checksum, m.checksumType, staleClaim); }), errc::kConditionFailed);
  EXPECT_EQ(code([&] { b.addReplica(guid); }), errc::kNotUnderReplicated);
  EXPECT_EQ(testsupport::locations(d, guid).size(), 2u);
}

TEST(Bartender, KeepsWorkingWhenALibrarianDies) {
  Topology t = cluster(1);
  t.librarians = 2;
  Deployment d(t);
  d.start();
  Session s(d);
  s.mkdir("/a");
  d.killLibrarian(0);
  s.mkdir("/a/b");
  EXPECT_EQ(s.ls("/a").size(), 1u);
  d.killLibrarian(1);
  EXPECT_EQ(code([&] { s.ls("/a"); }), errc::kLibrarianUnavailable);
}
