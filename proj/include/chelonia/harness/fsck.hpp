#pragma once

#include <map>
#include <string>
#include <vector>

#include "chelonia/ahash/store.hpp"
#include "chelonia/shepherd/shepherd.hpp"

namespace chelonia::harness {

class Deployment;

/// What one shepherd holds, read directly from the service and its backend.
struct ShepherdSnapshot {
  std::string url;
  bool up = false;
  std::vector<shepherd::ReplicaRecord> records;
  std::vector<std::string> blobs;
};

/// Replica locations of every file entry in the store, by state.
struct ReplicaTally {
  std::map<std::string, std::size_t> states;
  std::map<std::string, std::map<std::string, std::size_t>> perShepherd;  // url -> state -> count
  std::size_t files = 0;
  std::size_t total = 0;

  std::size_t count(const std::string& state) const;
  std::size_t count(const std::string& url, const std::string& state) const;
};

struct FsckResult {
  std::vector<std::string> problems;
  std::size_t collections = 0;
  std::size_t files = 0;
  std::size_t mountpoints = 0;
  std::size_t unreachable = 0;
  std::size_t orphanReplicas = 0;
  ReplicaTally tally;  // reachable files only

  bool ok() const { return problems.empty(); }
  std::string describe() const;
};

ReplicaTally tallyReplicas(const ahash::Store& store);

/// Walks the raw store from the root and cross-checks shepherd holdings.
/// Tree integrity (dangling children, shared or cyclic links, a missing
/// root) is always a problem. With `converged`, so are unreachable entries,
/// replicas in any state but ALIVE, ALIVE counts different from
/// neededReplicas, two replicas of a file on one shepherd, stale location
/// index entries and orphan replicas.
FsckResult fsck(const ahash::Store& store, const std::vector<ShepherdSnapshot>& shepherds, bool converged);

std::vector<ShepherdSnapshot> snapshotShepherds(Deployment& d);
FsckResult fsck(Deployment& d, bool converged);

}  // namespace chelonia::harness
