#include <gtest/gtest.h>

#include "chelonia/core/config.hpp"
#include "chelonia/core/digest.hpp"
#include "chelonia/core/errors.hpp"
#include "chelonia/core/wire.hpp"

using namespace chelonia;

TEST(Wire, RoundTripsEveryType) {
  Value v = {{"null", nullptr},
             {"t", true},
             {"f", false},
             {"i", -42},
             {"u", 7u},
             {"d", 2.5},
             {"s", "text"},
             {"a", {1, "two", nullptr}},
             {"o", {{"k", "v"}}},
             {"b", wire::binary({0, 1, 255})}};
  EXPECT_EQ(wire::decode(wire::encode(v)), v);
  EXPECT_EQ(wire::encodedSize(v), wire::encode(v).size());
}

TEST(Wire, MapSizeGrowsByConstantPerEntry) {
  // Fixed-width keys and values: each entry must add the same byte count.
  Value m = Value::object();
  std::size_t previous = wire::encode(m).size();
  std::size_t step = 0;
  for (int i = 0; i < 50; ++i) {
    char key[8];
    std::snprintf(key, sizeof key, "k%04d", i);
    m[key] = "0123456789";
    std::size_t now = wire::encode(m).size();
    if (i == 0) step = now - previous;
    EXPECT_EQ(now - previous, step);
    previous = now;
  }
}

TEST(Wire, RejectsMalformedInput) {
  std::string bytes = wire::encode(Value{{"k", "v"}});
  EXPECT_THROW(wire::decode(bytes.substr(0, bytes.size() - 1)), Error);
  EXPECT_THROW(wire::decode(bytes + "x"), Error);
}

TEST(Wire, FramesSplitOnBoundaries) {
  std::string stream = wire::frame(Value(1)) + wire::frame(Value("two"));
  Value out;
  std::size_t used = wire::unframe(stream, out);
  ASSERT_GT(used, 0u);
  EXPECT_EQ(out, Value(1));
  EXPECT_EQ(wire::unframe(std::string_view(stream).substr(used, 3), out), 0u);
  EXPECT_GT(wire::unframe(std::string_view(stream).substr(used), out), 0u);
  EXPECT_EQ(out, Value("two"));
}

TEST(Config, SectionsRepeatAndListsSplit) {
  auto cfg = Config::parse(R"(
# comment
[shepherd]
name = s1
peers = a, b
peers = c
[shepherd]
name = s2
[client]
replicas = 3
)");
  auto shepherds = cfg.all("shepherd");
  ASSERT_EQ(shepherds.size(), 2u);
  EXPECT_EQ(shepherds[0]->getString("name"), "s1");
  EXPECT_EQ(shepherds[0]->getList("peers"), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(cfg.find("client")->getInt("replicas", 0), 3);
  EXPECT_EQ(cfg.find("client")->getInt("missing", 9), 9);
  EXPECT_THROW(cfg.find("client")->require("missing"), Error);
}

TEST(Digest, KnownVectors) {
  std::string abc = "abc";
  std::span<const std::uint8_t> data(reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size());
  EXPECT_EQ(checksum(data), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(checksum(data, "md5"), "900150983cd24fb0d6963f7d28e17f72");
  EXPECT_EQ(checksum({}, "sha256"), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_THROW(checksum(data, "crc0"), Error);
}
