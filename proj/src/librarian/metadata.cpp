#include "chelonia/librarian/metadata.hpp"

#include <algorithm>
#include <cstdio>

#include "chelonia/core/config.hpp"
#include "chelonia/core/errors.hpp"

namespace chelonia::librarian {

std::string heartbeatID(const std::string& shepherdURL) { return "S:" + shepherdURL; }
std::string locationIndexID(const std::string& shepherdURL) { return "L:" + shepherdURL; }

const char* entryTypeName(EntryType t) {
  switch (t) {
    case EntryType::kFile:
      return "file";
    case EntryType::kCollection:
      return "collection";
    case EntryType::kMountpoint:
      return "mountpoint";
  }
  return "";
}

EntryType parseEntryType(std::string_view s) {
  if (s == "file") return EntryType::kFile;
  if (s == "collection") return EntryType::kCollection;
  if (s == "mountpoint") return EntryType::kMountpoint;
  throw Error(errc::kBadRequest, "unknown entry type " + std::string(s));
}

std::string PolicyRule::toString() const {
  std::string acts;
  for (const auto& a : actions) {
    if (!acts.empty()) acts += ",";
    acts += a;
  }
  return std::string(allow ? "allow" : "deny") + " " + identity + " " + acts;
}

PolicyRule PolicyRule::parse(std::string_view text) {
  // The identity is a DN and may contain spaces, so split on the first and
  // last blank.
  std::string t = trim(text);
  auto first = t.find(' ');
  auto last = t.rfind(' ');
  if (first == std::string::npos || first == last) throw Error(errc::kBadRequest, "bad policy rule '" + t + "'");
  PolicyRule r;
  std::string decision = t.substr(0, first);
  if (decision == "allow") {
    r.allow = true;
  } else if (decision == "deny") {
    r.allow = false;
  } else {
    throw Error(errc::kBadRequest, "bad policy decision '" + decision + "'");
  }
  r.identity = trim(t.substr(first + 1, last - first - 1));
  for (auto& a : split(t.substr(last + 1), ',')) {
    if (a != action::kRead && a != action::kAddEntry && a != action::kRemoveEntry && a != action::kModifyPolicy) {
      throw Error(errc::kBadRequest, "unknown action '" + a + "'");
    }
    r.actions.insert(a);
  }
  return r;
}

Value toValue(const Policy& p) {
  Value out = Value::array();
  for (const auto& r : p) out.push_back(r.toString());
  return out;
}

Policy policyFromValue(const Value& v) {
  Policy p;
  if (v.is_null()) return p;
  for (const auto& r : v) p.push_back(PolicyRule::parse(r.get<std::string>()));
  return p;
}

std::size_t Metadata::count(std::string_view replicaState) const {
  return static_cast<std::size_t>(
      std::count_if(locations.begin(), locations.end(), [&](const auto& l) { return l.second == replicaState; }));
}

ahash::Section policySection(const Policy& p) {
  ahash::Section s;
  char key[16];
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::snprintf(key, sizeof key, "%04zu", i);
    s[key] = p[i].toString();
  }
  return s;
}

Policy policyFromSection(const ahash::Section& s) {
  Policy p;
  for (const auto& [_, rule] : s) p.push_back(PolicyRule::parse(rule));
  return p;
}

bool isEntry(const ahash::Object& object) { return !ahash::field(object, section::kEntry, "type").empty(); }

Metadata fromObject(const std::string& guid, const ahash::Object& object) {
  Metadata m;
  m.guid = guid;
  m.type = parseEntryType(ahash::field(object, section::kEntry, "type"));
  auto get = [&](const char* key) { return ahash::field(object, section::kStates, key); };
  if (auto s = get("size"); !s.empty()) m.size = std::stoull(s);
  m.checksum = get("checksum");
  m.checksumType = get("checksumType");
  if (auto s = get("neededReplicas"); !s.empty()) m.neededReplicas = std::stoi(s);
  m.created = get("created");
  m.repairClaim = get("repairClaim");
  if (auto it = object.find(section::kEntries); it != object.end()) m.entries = it->second;
  if (auto it = object.find(section::kLocations); it != object.end()) m.locations = it->second;
  if (auto it = object.find(section::kPolicy); it != object.end()) m.policy = policyFromSection(it->second);
  m.mountURL = ahash::field(object, section::kMount, "url");
  return m;
}

ahash::Object toObject(const Metadata& m) {
  ahash::Object o;
  o[section::kEntry]["type"] = entryTypeName(m.type);
  auto& st = o[section::kStates];
  st["created"] = m.created;
  if (m.type == EntryType::kFile) {
    st["size"] = std::to_string(m.size);
    st["checksum"] = m.checksum;
    st["checksumType"] = m.checksumType;
    st["neededReplicas"] = std::to_string(m.neededReplicas);
    st["repairClaim"] = m.repairClaim;
    if (!m.locations.empty()) o[section::kLocations] = m.locations;
  }
  if (m.type == EntryType::kCollection && !m.entries.empty()) o[section::kEntries] = m.entries;
  if (m.type == EntryType::kMountpoint) o[section::kMount]["url"] = m.mountURL;
  if (!m.policy.empty()) o[section::kPolicy] = policySection(m.policy);
  return o;
}

std::string locationKey(const std::string& shepherdURL, const std::string& referenceID) {
  return shepherdURL + " " + referenceID;
}

std::pair<std::string, std::string> splitLocation(const std::string& key) {
  auto pos = key.rfind(' ');
  if (pos == std::string::npos) throw Error(errc::kBadRequest, "bad location key '" + key + "'");
  return {key.substr(0, pos), key.substr(pos + 1)};
}

std::string formatTime(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%017.6f", t);
  return buf;
}

void checkChildName(std::string_view name) {
  if (name.empty() || name == "." || name == ".." || name.find('/') != std::string_view::npos) {
    throw Error(errc::kInvalidName, "bad entry name '" + std::string(name) + "'");
  }
}

std::vector<std::string> splitLN(std::string_view ln) {
  if (ln.empty() || ln.front() != '/') throw Error(errc::kInvalidName, "Logical Names start at the root: '" + std::string(ln) + "'");
  std::vector<std::string> parts;
  std::size_t pos = 1;
  while (pos < ln.size()) {
    auto next = ln.find('/', pos);
    if (next == std::string_view::npos) next = ln.size();
    std::string_view part = ln.substr(pos, next - pos);
    // A trailing slash is tolerated; empty inner components are not.
    if (part.empty() && next != ln.size()) throw Error(errc::kInvalidName, "empty component in '" + std::string(ln) + "'");
    if (!part.empty()) {
      checkChildName(part);
      parts.emplace_back(part);
    }
    pos = next + 1;
  }
  return parts;
}

}  // namespace chelonia::librarian
