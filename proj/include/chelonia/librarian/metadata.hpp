#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "chelonia/ahash/store.hpp"
#include "chelonia/core/wire.hpp"

namespace chelonia::librarian {

// The root collection has a fixed, well-known GUID of the same width as
// generated ones.
inline constexpr const char* kRootGUID = "00000000000000000000000000000000";

// A-Hash object that lists every shepherd that ever reported.
inline constexpr const char* kShepherdRegistryID = "shepherds";

// Per-shepherd heartbeat record and reference index.
std::string heartbeatID(const std::string& shepherdURL);
std::string locationIndexID(const std::string& shepherdURL);

namespace section {
inline constexpr const char* kEntry = "entry";
inline constexpr const char* kStates = "states";
inline constexpr const char* kEntries = "entries";
inline constexpr const char* kLocations = "locations";
inline constexpr const char* kPolicy = "policy";
inline constexpr const char* kMount = "mount";
}  // namespace section

namespace state {
inline constexpr std::string_view kCreating = "CREATING";
inline constexpr std::string_view kAlive = "ALIVE";
inline constexpr std::string_view kOffline = "OFFLINE";
inline constexpr std::string_view kThirdWheel = "THIRDWHEEL";
inline constexpr std::string_view kInvalid = "INVALID";
// Only in reports: the replica no longer exists on the shepherd.
inline constexpr std::string_view kDeleted = "DELETED";
}  // namespace state

enum class EntryType { kFile, kCollection, kMountpoint };

const char* entryTypeName(EntryType t);
EntryType parseEntryType(std::string_view s);

namespace action {
inline constexpr std::string_view kRead = "read";
inline constexpr std::string_view kAddEntry = "addEntry";
inline constexpr std::string_view kRemoveEntry = "removeEntry";
inline constexpr std::string_view kModifyPolicy = "modifyPolicy";
}  // namespace action

struct PolicyRule {
  std::string identity;  // a DN, or "ANY"
  bool allow = true;
  std::set<std::string> actions;

  // "allow ANY read,addEntry"
  std::string toString() const;
  static PolicyRule parse(std::string_view text);
};

using Policy = std::vector<PolicyRule>;

Value toValue(const Policy& p);
Policy policyFromValue(const Value& v);

/// Typed view of one namespace entry as stored in the A-Hash.
struct Metadata {
  std::string guid;
  EntryType type = EntryType::kFile;
  std::uint64_t size = 0;
  std::string checksum;
  std::string checksumType;
  int neededReplicas = 0;
  std::string created;
  std::string repairClaim;
  std::map<std::string, std::string> entries;    // child name -> GUID
  std::map<std::string, std::string> locations;  // locationKey -> state
  Policy policy;
  std::string mountURL;

  std::size_t count(std::string_view replicaState) const;
};

Metadata fromObject(const std::string& guid, const ahash::Object& object);
ahash::Object toObject(const Metadata& m);

bool isEntry(const ahash::Object& object);

// Location keys are "<shepherd URL> <reference ID>".
std::string locationKey(const std::string& shepherdURL, const std::string& referenceID);
std::pair<std::string, std::string> splitLocation(const std::string& key);

// Policy rules live in numbered keys so their order survives the store.
ahash::Section policySection(const Policy& p);
Policy policyFromSection(const ahash::Section& s);

// Fixed-width decimal so timestamps do not change payload sizes.
std::string formatTime(double t);

// Splits an absolute Logical Name into its components. Throws
// Error(invalid-name) for relative names and empty components.
std::vector<std::string> splitLN(std::string_view ln);
void checkChildName(std::string_view name);

}  // namespace chelonia::librarian
