#include <gtest/gtest.h>

#include <filesystem>

#include "support.hpp"

using namespace chelonia;
using harness::Deployment;
using harness::Topology;
using testsupport::code;
using testsupport::countState;
using testsupport::locations;
using testsupport::pattern;

namespace {

Topology cluster(int shepherds) {
  Topology t;
  t.shepherds = shepherds;
  t.heartbeatPeriod = 10;
  t.grace = 10;
  t.monitorPeriod = 5;
  t.checkPeriod = 30;
  t.ticketTTL = 60;
  return t;
}

int holder(Deployment& d, const std::string& guid) {
  for (const auto& [url, _] : locations(d, guid)) return d.shepherdIndex(url);
  return -1;
}

void setNeeded(Deployment& d, const std::string& guid, int n) {
  ahash::ChangeBatch b;
  b.add(ahash::ChangeRequest::set(guid, librarian::section::kStates, "neededReplicas", std::to_string(n)));
  d.librarian(0)->modifyMetadata(b);
}

}  // namespace

TEST(Backend, FileBackendPersistsAcrossInstances) {
  auto dir = std::filesystem::temp_directory_path() / ("chelonia-fb-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  {
    shepherd::FileBackend fb(dir, 1000);
    fb.write("r1", pattern(300));
    fb.write("r2", pattern(200, 3));
    fb.saveIndex({{"r1", "x"}});
    EXPECT_EQ(fb.used(), 500u);
    EXPECT_EQ(code([&] { fb.write("r3", pattern(600)); }), errc::kInsufficientSpace);
  }
  shepherd::FileBackend again(dir, 1000);
  EXPECT_EQ(again.list(), (std::vector<std::string>{"r1", "r2"}));
  EXPECT_EQ(again.read("r1"), pattern(300));
  EXPECT_EQ(again.loadIndex(), (Value{{"r1", "x"}}));
  again.flipBit("r1", 9);
  EXPECT_NE(again.read("r1"), pattern(300));
  again.remove("r2");
  EXPECT_FALSE(again.exists("r2"));
  EXPECT_EQ(code([&] { again.read("r2"); }), errc::kBackendFailure);
  std::filesystem::remove_all(dir);
}

TEST(Shepherd, UploadMakesReplicaAlive) {
  Deployment d(cluster(1));
  d.start();
  auto data = pattern(5000);
  std::string guid = testsupport::putFile(d, "/f", data);
  auto locs = locations(d, guid);
  ASSERT_EQ(locs.size(), 1u);
  EXPECT_EQ(locs.begin()->second, "ALIVE");
  EXPECT_EQ(d.backend(0).used(), 5000u);
  EXPECT_EQ(testsupport::getFile(d, "/f"), data);
}

TEST(Shepherd, RefusesWhenFull) {
  Topology t = cluster(1);
  t.shepherdCapacity = 1000;
  Deployment d(t);
  d.start();
  std::string guid = d.librarian(0)->newEntry({{"type", "file"}, {"states", {{"size", 2000}, {"checksum", "00"}}}});
  EXPECT_EQ(code([&] { d.shepherd(0)->put(guid, 2000, "00", "sha256", "0"); }), errc::kInsufficientSpace);
  EXPECT_EQ(code([&] { testsupport::putFile(d, "/big", pattern(2000)); }), errc::kNoShepherdAvailable);
}

TEST(Shepherd, RegistrationNeedsCurrentClaimAndOneReplicaPerNode) {
  Deployment d(cluster(1));
  d.start();
  auto data = pattern(100);
  std::string guid = d.librarian(0)->newEntry({{"type", "file"}, {"states", {{"size", 100}, {"checksum", checksum(data)}}}});
  EXPECT_EQ(code([&] { d.shepherd(0)->put(guid, 100, checksum(data), "sha256", "stale"); }), errc::kConditionFailed);
  d.shepherd(0)->put(guid, 100, checksum(data), "sha256", "0");
  EXPECT_EQ(code([&] { d.shepherd(0)->put(guid, 100, checksum(data), "sha256", "0"); }), errc::kAlreadyHolder);
}

TEST(Shepherd, TicketsAreSingleUseAndExpire) {
  Deployment d(cluster(1));
  d.start();
  auto data = pattern(100);
  std::string guid = d.librarian(0)->newEntry({{"type", "file"}, {"states", {{"size", 100}, {"checksum", checksum(data)}}}});
  auto put = d.shepherd(0)->put(guid, 100, checksum(data), "sha256", "0");
  auto rpc = d.client();
  rpc.upload(put.url, data);
  EXPECT_EQ(code([&] { rpc.upload(put.url, data); }), errc::kTicketInvalid);

  std::string url = d.shepherd(0)->get(guid);
  d.net().runFor(61);
  EXPECT_EQ(code([&] { rpc.download(url); }), errc::kTicketInvalid);
  url = d.shepherd(0)->get(guid);
  EXPECT_EQ(rpc.download(url), data);
  EXPECT_EQ(code([&] { rpc.download(url); }), errc::kTicketInvalid);
}

TEST(Shepherd, WrongBytesLeaveReplicaInvalid) {
  Deployment d(cluster(1));
  d.start();
  auto data = pattern(100);
  std::string guid = d.librarian(0)->newEntry({{"type", "file"}, {"states", {{"size", 100}, {"checksum", checksum(data)}}}});
  auto put = d.shepherd(0)->put(guid, 100, checksum(data), "sha256", "0");
  EXPECT_EQ(code([&] { d.client().upload(put.url, pattern(100, 9)); }), errc::kChecksumMismatch);
  EXPECT_EQ(countState(d, guid, "INVALID"), 1u);
}

TEST(Shepherd, CorruptionIsDetectedOnReadAndCleanedUp) {
  Deployment d(cluster(1));
  d.start();
  std::string guid = testsupport::putFile(d, "/f", pattern(4096));
  auto ref = d.shepherd(0)->records().at(0).referenceID;
  d.backend(0).flipBit(ref, 1234);
  EXPECT_EQ(code([&] { testsupport::getFile(d, "/f"); }), errc::kChecksumMismatch);
  EXPECT_EQ(d.shepherd(0)->records().at(0).state, "INVALID");
  d.shepherd(0)->heartbeat();
  EXPECT_EQ(countState(d, guid, "INVALID"), 1u);
  d.shepherd(0)->selfCheck();
  d.shepherd(0)->heartbeat();
  EXPECT_TRUE(locations(d, guid).empty());
  EXPECT_FALSE(d.backend(0).exists(ref));
}

TEST(Shepherd, PeriodicCheckFindsSilentCorruption) {
  Deployment d(cluster(1));
  d.start();
  std::string guid = testsupport::putFile(d, "/f", pattern(4096));
  d.backend(0).flipBit(d.shepherd(0)->records().at(0).referenceID, 5);
  d.net().runFor(31);
  // Detection, report, deletion and a second report.
  d.net().runFor(60);
  EXPECT_TRUE(locations(d, guid).empty());
  EXPECT_EQ(d.backend(0).used(), 0u);
}

TEST(Shepherd, LostReplicaIsRecreatedElsewhere) {
  Deployment d(cluster(4));
  d.start();
  std::string guid = testsupport::putFile(d, "/f", pattern(3000), 3);
  d.net().runFor(1);
  ASSERT_EQ(countState(d, guid, "ALIVE"), 3u);
  int victim = holder(d, guid);
  d.killShepherd(victim);
  d.net().runFor(120);
  EXPECT_EQ(countState(d, guid, "ALIVE"), 3u);
  EXPECT_EQ(countState(d, guid, "OFFLINE"), 1u);
  for (int i = 0; i < 4; ++i) {
    if (i != victim) EXPECT_EQ(d.backend(i).used(), 3000u) << i;
  }
}

TEST(Shepherd, SurplusReplicaIsRetiredOnce) {
  Deployment d(cluster(4));
  d.start();
  std::string guid = testsupport::putFile(d, "/f", pattern(3000), 4);
  d.net().runFor(1);
  ASSERT_EQ(countState(d, guid, "ALIVE"), 4u);
  setNeeded(d, guid, 2);
  d.net().runFor(200);
  EXPECT_EQ(countState(d, guid, "ALIVE"), 2u);
  EXPECT_EQ(locations(d, guid).size(), 2u);
  std::uint64_t total = 0;
  for (int i = 0; i < 4; ++i) total += d.backend(i).used();
  EXPECT_EQ(total, 6000u);
}

TEST(Shepherd, ReturningNodeResyncsAndSurplusIsTrimmed) {
  Deployment d(cluster(3));
  d.start();
  std::string guid = testsupport::putFile(d, "/f", pattern(3000), 2);
  d.net().runFor(1);
  int victim = holder(d, guid);
  d.killShepherd(victim);
  d.net().runFor(120);
  ASSERT_EQ(countState(d, guid, "ALIVE"), 2u);
  ASSERT_EQ(countState(d, guid, "OFFLINE"), 1u);
  d.startShepherd(victim);
  d.net().runFor(1);
  EXPECT_EQ(countState(d, guid, "ALIVE"), 3u);
  d.net().runFor(200);
  EXPECT_EQ(countState(d, guid, "ALIVE"), 2u);
  EXPECT_EQ(locations(d, guid).size(), 2u);
}

TEST(Shepherd, OrphanIsDeletedAfterRestart) {
  Deployment d(cluster(1));
  d.start();
  testsupport::putFile(d, "/f", pattern(3000));
  d.killShepherd(0);
  d.client().call(d.bartenderURLs()[0], "delFile", {{"ln", "/f"}});
  d.startShepherd(0);
  d.net().runFor(1);
  EXPECT_EQ(d.backend(0).used(), 0u);
  EXPECT_TRUE(d.shepherd(0)->records().empty());
}

TEST(Shepherd, RestartRevalidatesStoredReplicas) {
  Deployment d(cluster(1));
  d.start();
  std::string guid = testsupport::putFile(d, "/f", pattern(3000));
  std::string ref = d.shepherd(0)->records().at(0).referenceID;
  d.killShepherd(0);
  d.backend(0).flipBit(ref, 77);
  d.startShepherd(0);
  d.net().runFor(1);
  EXPECT_EQ(countState(d, guid, "ALIVE"), 0u);
  d.net().runFor(100);
  EXPECT_TRUE(locations(d, guid).empty());
  EXPECT_FALSE(d.backend(0).exists(ref));
}
