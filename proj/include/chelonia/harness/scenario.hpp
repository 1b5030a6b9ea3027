#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "chelonia/core/config.hpp"
#include "chelonia/harness/deployment.hpp"
#include "chelonia/harness/fsck.hpp"
#include "chelonia/harness/report.hpp"

namespace chelonia::harness {

/// Scenario files are sectioned configs:
///
///     [scenario]
///     name = replication
///     kind = replication        (depth, width, replication, scripted,
///     seed = 1                   multiclient, ahash-bench, election,
///                                soak, roundtrip)
///     [topology]
///     shepherds = 5
///     checkPeriod = 30
///
///     [params]
///     files = 10
///
///     [schedule]
///     event = 300 kill shepherd 2
///     event = 315 sample
///
/// Keys of [topology] are the field names of Topology; `profile` is `lan`
/// or `wan`, `bartenderWorkers`/`bartenderQueue` size the bartender pool
/// and `firstCheckDelays` is a list.
Topology topologyFrom(const ConfigSection* section, Topology base = {});

Report runScenario(const Config& scenario, std::optional<std::uint64_t> seed = {});
Report runScenarioFile(const std::filesystem::path& file, std::optional<std::uint64_t> seed = {});

/// Directory of the bundled scenario files.
std::filesystem::path scenarioDirectory();
/// A file path, or the name of a bundled scenario.
std::filesystem::path resolveScenario(const std::string& nameOrPath);

// One runner per kind. Each reads [topology] and [params] with defaults.
Report runDepth(const Config& c, std::uint64_t seed);
Report runWidth(const Config& c, std::uint64_t seed);
Report runReplication(const Config& c, std::uint64_t seed);
Report runScripted(const Config& c, std::uint64_t seed);
Report runMultiClient(const Config& c, std::uint64_t seed);
Report runAHashBench(const Config& c, std::uint64_t seed);
Report runElection(const Config& c, std::uint64_t seed);
Report runSoak(const Config& c, std::uint64_t seed);
Report runRoundTrip(const Config& c, std::uint64_t seed);

/// Replica states as recorded in the A-Hash at one instant, read directly
/// so that sampling adds no traffic.
struct StateSample {
  double time = 0;
  ReplicaTally tally;
  hed::TransportStats stats;
};

StateSample sample(Deployment& d);

/// Replica tallies as the services report them: every file GUID fetched
/// through a librarian.
ReplicaTally serviceTally(Deployment& d, const std::vector<std::string>& guids);

/// Pseudorandom file content derived from the seed and a name.
Bytes content(std::uint64_t seed, const std::string& name, std::size_t size);

}  // namespace chelonia::harness
