#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "chelonia/core/errors.hpp"
#include "chelonia/hed/real_runtime.hpp"
#include "chelonia/hed/sim_network.hpp"
#include "chelonia/hed/socket_transport.hpp"

using namespace chelonia;
using namespace chelonia::hed;

namespace {

Handler echo() {
  return [](const CallContext& ctx) { return ctx.args; };
}

// Holds its worker for `seconds` of virtual time.
Handler slow(Runtime& rt, double seconds) {
  return [&rt, seconds](const CallContext& ctx) {
    rt.busy(seconds);
    return ctx.args;
  };
}

}  // namespace

TEST(Host, RegisterGivesEndpoint) {
  SimNetwork net;
  auto& host = net.addHost("host1");
  auto ep = host.registerService("Bartender", echo(), "CN=bart");
  EXPECT_EQ(ep.url, "sim://host1/Bartender");
  EXPECT_EQ(ep.dn, "CN=bart");
}

TEST(Host, DuplicateNameRejected) {
  SimNetwork net;
  auto& host = net.addHost("host1");
  host.registerService("Bartender", echo(), "CN=bart");
  try {
    host.registerService("Bartender", echo(), "CN=bart");
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.is(errc::kDuplicateName));
  }
}

TEST(Host, FourServicesFourEndpoints) {
  SimNetwork net;
  auto& host = net.addHost("h");
  std::set<std::string> urls;
  for (const char* s : {"AHash", "Librarian", "Shepherd", "Bartender"}) {
    urls.insert(host.registerService(s, echo(), std::string("CN=") + s).url);
  }
  EXPECT_EQ(urls.size(), 4u);
}

TEST(SimNetwork, EchoCountsTwoMessages) {
  SimNetwork net;
  auto& host = net.addHost("h");
  host.registerService("Echo", echo(), "CN=echo");
  host.setPublicOperations("Echo", {"echo"});
  RpcClient client(net, "CN=user");
  auto before = net.stats();
  Value out = client.call("sim://h/Echo", "echo", {{"x", 1}});
  EXPECT_EQ(out, (Value{{"x", 1}}));
  EXPECT_EQ(net.stats().messageCount - before.messageCount, 2u);
}

TEST(SimNetwork, UnknownTarget) {
  SimNetwork net;
  net.addHost("h");
  RpcClient client(net, "CN=user");
  try {
    client.call("sim://h/Nothing", "op");
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.is(errc::kUnknownTarget));
  }
  try {
    client.call("sim://nohost/Nothing", "op");
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.is(errc::kUnknownTarget));
  }
}

TEST(SimNetwork, TrustListAllowsDeniesAndEmptyDenies) {
  SimNetwork net;
  auto& host = net.addHost("h");
  auto lib = host.registerService("Librarian", echo(), "CN=lib");
  auto other = host.registerService("Other", echo(), "CN=other");
  host.setTrustedDNs("Librarian", {"CN=shepherd"});
  EXPECT_TRUE(host.checkTrust("CN=shepherd", lib));
  EXPECT_FALSE(host.checkTrust("CN=rogue", lib));
  EXPECT_FALSE(host.checkTrust("CN=shepherd", other));

  int calls = 0;
  host.unregisterService("Other");
  host.registerService("Other", [&](const CallContext&) {
    ++calls;
    return Value();
  }, "CN=other");
  RpcClient rogue(net, "CN=rogue");
  EXPECT_THROW(rogue.call(lib.url, "report"), Error);
  EXPECT_THROW(rogue.call(other.url, "x"), Error);
  EXPECT_EQ(calls, 0);
  RpcClient shepherd(net, "CN=shepherd");
  EXPECT_NO_THROW(shepherd.call(lib.url, "report"));
}

TEST(SimNetwork, LatencyAndBandwidthDelay) {
  SimNetwork net;
  auto& host = net.addHost("h", {{}, 0.0});
  host.registerService("Echo", echo(), "CN=echo");
  host.setPublicOperations("Echo", {"echo"});
  RpcClient client(net, "CN=user");

  net.setSimulatedNetwork(0.01, 1e6);
  double t0 = net.now();
  auto s0 = net.stats();
  client.call("sim://h/Echo", "echo", Value());
  auto s1 = net.stats();
  // Two messages carrying tiny payloads: 0.02 s plus payload/bandwidth.
  double expected = 0.02 + static_cast<double>(s1.bytesSent - s0.bytesSent) / 1e6;
  EXPECT_NEAR(net.now() - t0, expected, 1e-12);

  // A 1 MB payload costs one extra second each way it travels.
  std::string big(1000000, 'x');
  t0 = net.now();
  client.call("sim://h/Echo", "echo", big);
  EXPECT_GT(net.now() - t0, 2.0);
}

TEST(SimNetwork, WorkerPoolQueuesFifo) {
  SimNetwork net;
  SimHostOptions options;
  options.pool = {2, 16};
  options.processingTime = 0.0;
  auto& host = net.addHost("h", options);
  host.registerService("Slow", slow(net, 1.0), "CN=slow");
  host.setPublicOperations("Slow", {"hold"});
  net.setSimulatedNetwork(0.0, 1e12);
  RpcClient client(net, "CN=user");

  std::vector<double> done;
  for (int i = 0; i < 3; ++i) {
    net.schedule(0.0, [&] {
      client.call("sim://h/Slow", "hold");
      done.push_back(net.now());
    });
  }
  net.runUntil(10.0);
  ASSERT_EQ(done.size(), 3u);
  EXPECT_NEAR(done[0], 1.0, 1e-9);
  EXPECT_NEAR(done[1], 1.0, 1e-9);
  // The third caller waits for a worker to free up.
  EXPECT_NEAR(done[2], 2.0, 1e-9);
}

TEST(SimNetwork, QueueFullWhenWaitingRoomExhausted) {
  SimNetwork net;
  SimHostOptions options;
  options.pool = {1, 1};
  auto& host = net.addHost("h", options);
  host.registerService("Slow", slow(net, 1.0), "CN=slow");
  host.setPublicOperations("Slow", {"hold"});
  RpcClient client(net, "CN=user");
  std::vector<std::string> outcome;
  for (int i = 0; i < 3; ++i) {
    net.schedule(0.0, [&] {
      try {
        client.call("sim://h/Slow", "hold");
        outcome.push_back("ok");
      } catch (const Error& e) {
        outcome.push_back(e.code());
      }
    });
  }
  net.runUntil(10.0);
  EXPECT_EQ(outcome, (std::vector<std::string>{"ok", "ok", "queue-full"}));
}

TEST(SimNetwork, MinLatencyConstantMaxGrows) {
  // C callers against T workers: the fastest caller never waits, the
  // slowest waits for ceil(C/T)-1 rounds.
  auto run = [](int callers) {
    SimNetwork net;
    SimHostOptions options;
    options.pool = {4, 1000};
    auto& host = net.addHost("h", options);
    host.registerService("Slow", slow(net, 0.1), "CN=slow");
    host.setPublicOperations("Slow", {"hold"});
    RpcClient client(net, "CN=user");
    std::vector<double> done;
    for (int i = 0; i < callers; ++i) {
      net.schedule(0.0, [&] {
        client.call("sim://h/Slow", "hold");
        done.push_back(net.now());
      });
    }
    net.runUntil(1000.0);
    return std::make_pair(*std::min_element(done.begin(), done.end()), *std::max_element(done.begin(), done.end()));
  };
  auto [min8, max8] = run(8);
  auto [min16, max16] = run(16);
  EXPECT_DOUBLE_EQ(min8, min16);
  EXPECT_LT(max8, max16);
}

TEST(SimNetwork, DownHostTimesOut) {
  SimNetwork net;
  auto& host = net.addHost("h");
  host.registerService("Echo", echo(), "CN=echo");
  host.setPublicOperations("Echo", {"echo"});
  net.setHostDown("h", true);
  RpcClient client(net, "CN=user");
  double t0 = net.now();
  try {
    client.call("sim://h/Echo", "echo");
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.is(errc::kTransportFailure));
  }
  EXPECT_NEAR(net.now() - t0, net.rpcTimeout(), 1e-12);
}

TEST(SimNetwork, PartitionBlocksAcrossGroups) {
  SimNetwork net;
  for (const char* h : {"a", "b", "c"}) {
    net.addHost(h).registerService("Echo", echo(), "CN=echo");
    net.host(h).setPublicOperations("Echo", {"echo"});
  }
  net.setPartition({{"a"}, {"b", "c"}});
  RpcClient fromA(net, "CN=user", {}, "a");
  RpcClient fromB(net, "CN=user", {}, "b");
  EXPECT_THROW(fromA.call("sim://b/Echo", "echo"), Error);
  EXPECT_NO_THROW(fromB.call("sim://c/Echo", "echo"));
  net.healPartition();
  EXPECT_NO_THROW(fromA.call("sim://b/Echo", "echo"));
}

TEST(SimNetwork, SameSeedSameStats) {
  auto run = [](std::uint64_t seed) {
    SimNetwork net(seed);
    auto& host = net.addHost("h");
    host.registerService("Echo", echo(), "CN=echo");
    host.setPublicOperations("Echo", {"echo"});
    RpcClient client(net, "CN=user");
    for (int i = 0; i < 20; ++i) {
      net.schedule(net.uniform(0, 5), [&] { client.call("sim://h/Echo", "echo", net.randomHex(8)); });
    }
    net.runUntil(10);
    auto s = net.stats();
    return std::make_tuple(s.messageCount, s.bytesSent, s.virtualDelay);
  };
  EXPECT_EQ(run(7), run(7));
}

TEST(SimNetwork, ProfilesSameCountsDifferentTime) {
  auto run = [](NetworkProfile p) {
    SimNetwork net;
    net.setProfile(p);
    auto& host = net.addHost("h");
    host.registerService("Echo", echo(), "CN=echo");
    host.setPublicOperations("Echo", {"echo"});
    RpcClient client(net, "CN=user");
    for (int i = 0; i < 10; ++i) client.call("sim://h/Echo", "echo", i);
    return std::make_pair(net.stats().messageCount, net.now());
  };
  auto lan = run(NetworkProfile::lan());
  auto wan = run(NetworkProfile::wan());
  EXPECT_EQ(lan.first, wan.first);
  EXPECT_LT(lan.second, wan.second);
}

TEST(SocketTransport, NotSimulationTransport) {
  SocketTransport t;
  try {
    setSimulatedNetwork(t, 0.01, 1e6);
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.is(errc::kNotSimulation));
  }
  SimNetwork net;
  EXPECT_NO_THROW(setSimulatedNetwork(net, 0.01, 1e6));
}

TEST(SocketTransport, EchoOverTcpWithSecrets) {
  Host host("local", "tcp://127.0.0.1:0", {2, 4});
  host.registerService("Echo", echo(), "CN=echo");
  host.setTrustedDNs("Echo", {"CN=peer"});
  host.setIdentitySecrets({{"CN=peer", "s3cret"}});
  SocketServer server(host, "127.0.0.1", 0);
  server.start();
  std::string url = "tcp://127.0.0.1:" + std::to_string(server.port()) + "/Echo";

  SocketTransport transport(5.0);
  RpcClient good(transport, "CN=peer", "s3cret");
  EXPECT_EQ(good.call(url, "echo", {{"k", "v"}}), (Value{{"k", "v"}}));
  EXPECT_EQ(transport.stats().messageCount, 2u);

  RpcClient forged(transport, "CN=peer", "wrong");
  try {
    forged.call(url, "echo");
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.is(errc::kUntrusted));
  }
  server.stop();
}

TEST(SocketTransport, QueueFullUnderLoad) {
  Host host("local", "tcp://127.0.0.1:0", {1, 0});
  host.registerService("Slow", [](const CallContext& ctx) {
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    return ctx.args;
  }, "CN=slow");
  host.setPublicOperations("Slow", {"hold"});
  SocketServer server(host, "127.0.0.1", 0);
  server.start();
  std::string url = "tcp://127.0.0.1:" + std::to_string(server.port()) + "/Slow";
  SocketTransport transport(5.0);
  RpcClient client(transport, "CN=user");
  std::atomic<int> ok{0};
  std::atomic<int> full{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 3; ++i) {
    threads.emplace_back([&] {
      try {
        client.call(url, "hold");
        ++ok;
      } catch (const Error& e) {
        if (e.is(errc::kQueueFull)) ++full;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_GE(ok.load(), 1);
  EXPECT_GE(full.load(), 1);
  server.stop();
}

TEST(RealRuntime, TimersFireAndCancel) {
  RealRuntime rt;
  std::atomic<int> fired{0};
  rt.schedule(0.01, [&] { ++fired; });
  auto id = rt.schedule(0.05, [&] { fired += 100; });
  rt.cancel(id);
  std::this_thread::sleep_for(std::chrono::milliseconds(150));
  EXPECT_EQ(fired.load(), 1);
}
