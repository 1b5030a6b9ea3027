#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "chelonia/core/wire.hpp"

namespace chelonia::ahash {

using Section = std::map<std::string, std::string>;
// An object with no sections is the same as an absent object.
using Object = std::map<std::string, Section>;

enum class ChangeType { kSet, kUnset, kDeleteObject };
enum class ConditionKind { kHasKey, kNoKey, kValueEquals, kValueDiffers };

struct Condition {
  ConditionKind kind = ConditionKind::kHasKey;
  std::string section;
  std::string key;
  std::string value;

  static Condition hasKey(std::string section, std::string key) {
    return {ConditionKind::kHasKey, std::move(section), std::move(key), {}};
  }
  static Condition noKey(std::string section, std::string key) {
    return {ConditionKind::kNoKey, std::move(section), std::move(key), {}};
  }
  static Condition equals(std::string section, std::string key, std::string value) {
    return {ConditionKind::kValueEquals, std::move(section), std::move(key), std::move(value)};
  }
  // Holds when the key is absent or carries a different value.
  static Condition differs(std::string section, std::string key, std::string value) {
    return {ConditionKind::kValueDiffers, std::move(section), std::move(key), std::move(value)};
  }

  bool holds(const Object& object) const;
};

struct ChangeRequest {
  std::string changeID;
  std::string id;
  ChangeType type = ChangeType::kSet;
  std::string section;
  std::string key;
  std::string value;
  std::vector<Condition> conditions;

  static ChangeRequest set(std::string id, std::string section, std::string key, std::string value);
  static ChangeRequest unset(std::string id, std::string section, std::string key);
  static ChangeRequest deleteObject(std::string id);

  ChangeRequest& when(Condition c) {
    conditions.push_back(std::move(c));
    return *this;
  }
  ChangeRequest& named(std::string name) {
    changeID = std::move(name);
    return *this;
  }
};

/// One change() call. Conditions are all evaluated against the state
/// before the batch. With `atomic`, a single failed condition rejects
/// the whole batch.
struct ChangeBatch {
  std::vector<ChangeRequest> requests;
  bool atomic = false;

  ChangeBatch& add(ChangeRequest r);
};

inline constexpr std::string_view kApplied = "applied";
inline constexpr std::string_view kConditionFailed = "condition-failed";
inline constexpr std::string_view kFailed = "failed";

using ChangeResults = std::map<std::string, std::string>;

class Store {
 public:
  const Object& get(const std::string& id) const;
  bool contains(const std::string& id) const { return objects_.count(id) > 0; }
  const std::map<std::string, Object>& objects() const { return objects_; }

  /// Decides each request against the current state without changing it.
  /// Returns the per-request outcome and the unconditional effects to
  /// apply (and to log).
  ChangeResults evaluate(const ChangeBatch& batch, std::vector<ChangeRequest>& effects) const;

  void apply(const std::vector<ChangeRequest>& effects);

  void clear() { objects_.clear(); }

  /// Canonical byte image; equal stores give equal bytes.
  std::string canonical() const;

  Value toValue() const;
  static Store fromValue(const Value& v);

 private:
  std::map<std::string, Object> objects_;
};

Value toValue(const Object& object);
Object objectFromValue(const Value& v);
Value toValue(const ChangeRequest& r);
ChangeRequest changeFromValue(const Value& v);
Value toValue(const ChangeBatch& b);
ChangeBatch batchFromValue(const Value& v);

// Convenience lookup; empty string when absent.
std::string field(const Object& object, const std::string& section, const std::string& key);

}  // namespace chelonia::ahash
