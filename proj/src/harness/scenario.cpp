#include "chelonia/harness/scenario.hpp"

#include <random>

#include "chelonia/core/digest.hpp"
#include "chelonia/core/errors.hpp"
#include "chelonia/librarian/metadata.hpp"
#include "common.hpp"

#ifndef CHELONIA_SCENARIO_DIR
#define CHELONIA_SCENARIO_DIR "scenarios"
#endif

namespace chelonia::harness {

namespace detail {

Value bartender(Deployment& d, const std::string& op, const Value& args) {
  return d.client().call(d.bartenderURLs().at(0), op, args);
}

std::string putFile(Deployment& d, const std::string& ln, const Bytes& data, int needed) {
  Value r = bartender(d, "putFile",
                      {{"ln", ln}, {"size", data.size()}, {"checksum", checksum(data)}, {"neededReplicas", needed}});
  d.client().upload(r.at("url").get<std::string>(), data);
  return r.at("guid").get<std::string>();
}

Bytes getFile(Deployment& d, const std::string& ln) {
  Value r = bartender(d, "getFile", {{"ln", ln}});
  return d.client().download(r.at("url").get<std::string>());
}

double param(const Config& c, const char* key, double fallback) {
  const auto* s = c.find("params");
  return s ? s->getDouble(key, fallback) : fallback;
}

std::string param(const Config& c, const char* key, const std::string& fallback) {
  const auto* s = c.find("params");
  return s ? s->getString(key, fallback) : fallback;
}

}  // namespace detail

Topology topologyFrom(const ConfigSection* s, Topology t) {
  if (!s) return t;
  auto count = [&](const char* key, int& field) { field = static_cast<int>(s->getInt(key, field)); };
  auto real = [&](const char* key, double& field) { field = s->getDouble(key, field); };
  count("ahashNodes", t.ahashNodes);
  count("librarians", t.librarians);
  count("bartenders", t.bartenders);
  count("shepherds", t.shepherds);
  count("defaultNeededReplicas", t.defaultNeededReplicas);
  t.shepherdCapacity = static_cast<std::uint64_t>(s->getInt("shepherdCapacity", static_cast<std::int64_t>(t.shepherdCapacity)));
  std::string profile = s->getString("profile", "");
  if (profile == "lan") t.profile = hed::NetworkProfile::lan();
  else if (profile == "wan") t.profile = hed::NetworkProfile::wan();
  else if (!profile.empty()) throw Error(errc::kBadRequest, "unknown network profile " + profile);
  real("latency", t.profile.latency);
  real("bandwidth", t.profile.bandwidth);
  real("masterTimeout", t.masterTimeout);
  real("pingInterval", t.pingInterval);
  real("heartbeatPeriod", t.heartbeatPeriod);
  real("grace", t.grace);
  real("monitorPeriod", t.monitorPeriod);
  real("checkPeriod", t.checkPeriod);
  real("ticketTTL", t.ticketTTL);
  real("processingTime", t.processingTime);
  if (s->has("firstCheckDelays")) {
    t.firstCheckDelays.clear();
    for (const auto& v : s->getList("firstCheckDelays")) t.firstCheckDelays.push_back(std::stod(v));
  }
  t.bartenderPool.maxConcurrent =
      static_cast<std::size_t>(s->getInt("bartenderWorkers", static_cast<std::int64_t>(t.bartenderPool.maxConcurrent)));
  t.bartenderPool.queueCapacity =
      static_cast<std::size_t>(s->getInt("bartenderQueue", static_cast<std::int64_t>(t.bartenderPool.queueCapacity)));
  return t;
}

Report runScenario(const Config& c, std::optional<std::uint64_t> seed) {
  const auto* s = c.find("scenario");
  if (!s) throw Error(errc::kBadRequest, "scenario file has no [scenario] section");
  std::string kind = s->require("kind");
  std::uint64_t sd = seed ? *seed : static_cast<std::uint64_t>(s->getInt("seed", 1));
  Report r;
  if (kind == "depth") r = runDepth(c, sd);
  else if (kind == "width") r = runWidth(c, sd);
  else if (kind == "replication") r = runReplication(c, sd);
  else if (kind == "scripted") r = runScripted(c, sd);
  else if (kind == "multiclient") r = runMultiClient(c, sd);
  else if (kind == "ahash-bench") r = runAHashBench(c, sd);
  else if (kind == "election") r = runElection(c, sd);
  else if (kind == "soak") r = runSoak(c, sd);
  else if (kind == "roundtrip") r = runRoundTrip(c, sd);
  else throw Error(errc::kBadRequest, "unknown scenario kind " + kind);
  r.scenario = s->getString("name", kind);
  r.kind = kind;
  r.seed = sd;
  return r;
}

Report runScenarioFile(const std::filesystem::path& file, std::optional<std::uint64_t> seed) {
  return runScenario(Config::load(file), seed);
}

std::filesystem::path scenarioDirectory() {
  if (const char* env = std::getenv("CHELONIA_SCENARIOS")) return env;
  return CHELONIA_SCENARIO_DIR;
}

std::filesystem::path resolveScenario(const std::string& nameOrPath) {
  std::filesystem::path p(nameOrPath);
  if (std::filesystem::exists(p)) return p;
  auto bundled = scenarioDirectory() / (nameOrPath + ".conf");
  if (std::filesystem::exists(bundled)) return bundled;
  throw Error(errc::kNotFound, "no scenario " + nameOrPath);
}

StateSample sample(Deployment& d) {
  return {d.net().loopTime(), tallyReplicas(d.store()), d.net().stats()};
}

ReplicaTally serviceTally(Deployment& d, const std::vector<std::string>& guids) {
  ReplicaTally t;
  if (guids.empty()) return t;
  auto rpc = hed::RpcClient(d.net(), "CN=bartender-" + Deployment::bartenderHost(0));
  Value entries = rpc.call(d.librarianURLs().at(0), "getMetadata", {{"guids", guids}}).at("entries");
  for (const auto& g : guids) {
    if (!entries.contains(g)) continue;
    auto m = librarian::fromObject(g, ahash::objectFromValue(entries.at(g)));
    ++t.files;
    for (const auto& [key, state] : m.locations) {
      ++t.states[state];
      ++t.perShepherd[librarian::splitLocation(key).first][state];
      ++t.total;
    }
  }
  return t;
}

Bytes content(std::uint64_t seed, const std::string& name, std::size_t size) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : name) h = (h ^ ch) * 1099511628211ull;
  std::mt19937_64 rng(seed ^ h);
  Bytes out(size);
  for (std::size_t i = 0; i < size; i += 8) {
    std::uint64_t v = rng();
    for (std::size_t j = 0; j < 8 && i + j < size; ++j) out[i + j] = static_cast<std::uint8_t>(v >> (8 * j));
  }
  return out;
}

}  // namespace chelonia::harness
