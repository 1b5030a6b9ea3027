#include "chelonia/harness/fsck.hpp"

#include <cstdlib>
#include <set>
#include <sstream>

#include "chelonia/harness/deployment.hpp"
#include "chelonia/librarian/metadata.hpp"

namespace chelonia::harness {

namespace {

namespace sec = librarian::section;

const ahash::Section* sectionOf(const ahash::Object& o, const char* name) {
  auto it = o.find(name);
  return it == o.end() ? nullptr : &it->second;
}

std::string typeOf(const ahash::Object& o) { return ahash::field(o, sec::kEntry, "type"); }

// "<url> <ref>"; split on the last space so URLs stay whole.
std::pair<std::string, std::string> splitKey(const std::string& key) {
  auto pos = key.rfind(' ');
  if (pos == std::string::npos) return {key, ""};
  return {key.substr(0, pos), key.substr(pos + 1)};
}

void tallyFile(const ahash::Object& o, ReplicaTally& t) {
  ++t.files;
  if (const auto* locs = sectionOf(o, sec::kLocations)) {
    for (const auto& [key, state] : *locs) {
      ++t.states[state];
      ++t.perShepherd[splitKey(key).first][state];
      ++t.total;
    }
  }
}

}  // namespace

std::size_t ReplicaTally::count(const std::string& state) const {
  auto it = states.find(state);
  return it == states.end() ? 0 : it->second;
}

std::size_t ReplicaTally::count(const std::string& url, const std::string& state) const {
  auto it = perShepherd.find(url);
  if (it == perShepherd.end()) return 0;
  auto jt = it->second.find(state);
  return jt == it->second.end() ? 0 : jt->second;
}

std::string FsckResult::describe() const {
  std::ostringstream out;
  out << collections << " collections, " << files << " files, " << mountpoints << " mountpoints, " << unreachable
      << " unreachable, " << orphanReplicas << " orphan replicas";
  for (const auto& [state, n] : tally.states) out << ", " << state << "=" << n;
  for (std::size_t i = 0; i < problems.size() && i < 10; ++i) out << "\n  " << problems[i];
  if (problems.size() > 10) out << "\n  ... " << problems.size() - 10 << " more";
  return out.str();
}

ReplicaTally tallyReplicas(const ahash::Store& store) {
  ReplicaTally t;
  for (const auto& [id, o] : store.objects()) {
    if (typeOf(o) == "file") tallyFile(o, t);
  }
  return t;
}

FsckResult fsck(const ahash::Store& store, const std::vector<ShepherdSnapshot>& shepherds, bool converged) {
  FsckResult r;
  auto problem = [&](std::string p) { r.problems.push_back(std::move(p)); };
  const auto& objects = store.objects();

  // Tree walk. Every GUID but the root must be linked exactly once.
  std::set<std::string> visited;
  std::map<std::string, std::string> parentOf;
  std::vector<std::string> files;
  std::string root = librarian::kRootGUID;
  auto rootIt = objects.find(root);
  if (rootIt == objects.end() || typeOf(rootIt->second) != "collection") {
    problem("root collection missing");
  } else {
    std::vector<std::string> stack{root};
    visited.insert(root);
    while (!stack.empty()) {
      std::string guid = stack.back();
      stack.pop_back();
      const auto& o = objects.at(guid);
      std::string type = typeOf(o);
      if (type == "collection") {
        ++r.collections;
      } else if (type == "file") {
        ++r.files;
        files.push_back(guid);
      } else if (type == "mountpoint") {
        ++r.mountpoints;
      } else {
        problem("entry " + guid + " has unknown type '" + type + "'");
      }
      const auto* children = sectionOf(o, sec::kEntries);
      if (!children) continue;
      if (type != "collection" && !children->empty()) problem("non-collection " + guid + " has children");
      for (const auto& [name, child] : *children) {
        auto it = objects.find(child);
        if (it == objects.end() || typeOf(it->second).empty()) {
          problem("dangling child " + name + " -> " + child + " in " + guid);
          continue;
        }
        if (child == root) {
          problem("root linked as " + name + " in " + guid);
          continue;
        }
        if (!visited.insert(child).second) {
          problem("entry " + child + " linked from " + parentOf[child] + " and " + guid);
          continue;
        }
        parentOf[child] = guid;
        stack.push_back(child);
      }
    }
  }
  for (const auto& [id, o] : objects) {
    if (typeOf(o).empty() || visited.count(id)) continue;
    ++r.unreachable;
    if (converged) problem("unreachable entry " + id);
  }

  // Replicas, from the namespace side.
  std::map<std::string, const ShepherdSnapshot*> byURL;
  std::map<std::string, std::map<std::string, const shepherd::ReplicaRecord*>> recordsByURL;
  for (const auto& s : shepherds) {
    byURL[s.url] = &s;
    for (const auto& rec : s.records) recordsByURL[s.url][rec.referenceID] = &rec;
  }
  std::set<std::pair<std::string, std::string>> referenced;  // (url, ref)
  for (const auto& guid : files) {
    const auto& o = objects.at(guid);
    tallyFile(o, r.tally);
    long needed = std::atol(ahash::field(o, sec::kStates, "neededReplicas").c_str());
    std::size_t alive = 0;
    std::set<std::string> holders;
    const auto* locs = sectionOf(o, sec::kLocations);
    if (locs) {
      for (const auto& [key, state] : *locs) {
        auto [url, ref] = splitKey(key);
        referenced.insert({url, ref});
        if (state == librarian::state::kAlive) ++alive;
        if (!holders.insert(url).second) problem("file " + guid + " has two replicas on " + url);
        if (!converged) continue;
        if (state != librarian::state::kAlive) problem("file " + guid + " replica on " + url + " is " + state);
        auto sh = byURL.find(url);
        if (sh == byURL.end()) {
          problem("file " + guid + " has a replica on unknown shepherd " + url);
          continue;
        }
        std::string indexed = ahash::field(store.contains(librarian::locationIndexID(url))
                                               ? store.get(librarian::locationIndexID(url))
                                               : ahash::Object{},
                                           "refs", ref);
        if (indexed != guid) problem("location index of " + url + " lacks " + ref);
        if (!sh->second->up) continue;
        auto rec = recordsByURL[url].find(ref);
        if (rec == recordsByURL[url].end()) {
          problem("file " + guid + " lists " + ref + " which " + url + " does not hold");
        } else if (rec->second->guid != guid || rec->second->state != state) {
          problem("shepherd " + url + " holds " + ref + " as " + rec->second->guid + "/" + rec->second->state);
        }
      }
    }
    if (converged && static_cast<long>(alive) != needed) {
      problem("file " + guid + " has " + std::to_string(alive) + " ALIVE replicas, needs " + std::to_string(needed));
    }
  }

  // Replicas, from the storage side.
  for (const auto& s : shepherds) {
    if (!s.up) continue;
    std::set<std::string> recorded;
    std::set<std::string> blobs(s.blobs.begin(), s.blobs.end());
    for (const auto& rec : s.records) {
      recorded.insert(rec.referenceID);
      if (converged && rec.state == librarian::state::kAlive && !blobs.count(rec.referenceID)) {
        problem("ALIVE replica " + rec.referenceID + " on " + s.url + " has no stored bytes");
      }
      if (!referenced.count({s.url, rec.referenceID})) {
        ++r.orphanReplicas;
        if (converged) problem("orphan replica " + rec.referenceID + " of " + rec.guid + " on " + s.url);
      }
    }
    for (const auto& blob : s.blobs) {
      if (recorded.count(blob)) continue;
      ++r.orphanReplicas;
      if (converged) problem("orphan blob " + blob + " on " + s.url);
    }
  }
  return r;
}

std::vector<ShepherdSnapshot> snapshotShepherds(Deployment& d) {
  std::vector<ShepherdSnapshot> out;
  for (std::size_t i = 0; i < d.shepherdURLs().size(); ++i) {
    int idx = static_cast<int>(i);
    ShepherdSnapshot s;
    s.url = d.shepherdURLs()[i];
    s.up = d.shepherdUp(idx);
    if (s.up) s.records = d.shepherd(idx)->records();
    s.blobs = d.backend(idx).list();
    out.push_back(std::move(s));
  }
  return out;
}

FsckResult fsck(Deployment& d, bool converged) { return fsck(d.store(), snapshotShepherds(d), converged); }

}  // namespace chelonia::harness
