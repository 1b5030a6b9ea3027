#pragma once

#include <set>
#include <string>
#include <vector>

#include "chelonia/hed/failover.hpp"
#include "chelonia/hed/host.hpp"
#include "chelonia/hed/runtime.hpp"
#include "chelonia/librarian/librarian.hpp"
#include "chelonia/librarian/metadata.hpp"

namespace chelonia::bartender {

using librarian::Policy;
using librarian::PolicyRule;

/// Ordered ACL: the first rule naming both the identity (or ANY) and the
/// action decides; no match denies.
bool permits(const Policy& policy, const std::string& dn, std::string_view action);

/// Policy in force at path[index]: the nearest non-empty policy on the way
/// up to the root, else `fallback`.
const Policy& effectivePolicy(const std::vector<librarian::PathElement>& path, std::size_t index,
                              const Policy& fallback);

Policy allowAll();

struct BartenderConfig {
  std::vector<std::string> librarianURLs;
  Policy rootPolicy = allowAll();
  int defaultNeededReplicas = 1;
};

/// User-facing service. Evaluates policies, drives the librarian through
/// namespace changes and brokers transfers; file bytes never pass through
/// it.
class Bartender {
 public:
  Bartender(hed::Runtime& runtime, hed::RpcClient rpc, BartenderConfig config);

  Value handle(const hed::CallContext& ctx);

  /// Operations open to any caller (policy still applies). addReplica is
  /// reserved for trusted shepherds.
  static std::set<std::string> publicOperations();

  void makeCollection(const std::string& dn, const std::string& ln, const Policy& policy);
  void unmakeCollection(const std::string& dn, const std::string& ln);
  Value putFile(const std::string& dn, const std::string& ln, std::uint64_t size, const std::string& checksum,
                const std::string& checksumType, int neededReplicas);
  Value getFile(const std::string& dn, const std::string& ln);
  Value list(const std::string& dn, const std::string& ln);
  Value stat(const std::string& dn, const std::string& ln);
  void delFile(const std::string& dn, const std::string& ln);
  void move(const std::string& dn, const std::string& src, const std::string& dst);
  void mount(const std::string& dn, const std::string& ln, const std::string& url);
  void setPolicy(const std::string& dn, const std::string& ln, const Policy& policy);
  Value addReplica(const std::string& guid);

 private:
  librarian::TraverseResult traverse(const std::string& ln);
  void require(const librarian::TraverseResult& r, std::size_t index, const std::string& dn, std::string_view action);
  // Resolves the parent of a new entry; returns its index in r.path.
  std::size_t newChildParent(const librarian::TraverseResult& r, std::string& name);
  std::string createLinked(const std::string& dn, const std::string& ln, const Value& tmpl);
  void unlinkAndDelete(const std::string& parent, const std::string& name, const std::string& guid);
  std::vector<std::string> shepherdsByUsage(const std::set<std::string>& exclude);
  bool allApplied(const Value& results) const;

  hed::Runtime& runtime_;
  hed::RpcClient rpc_;
  BartenderConfig config_;
  hed::FailoverClient librarian_;
};

}  // namespace chelonia::bartender
