#include "chelonia/ahash/store.hpp"

#include <set>

#include "chelonia/core/errors.hpp"

namespace chelonia::ahash {
namespace {

const Object kEmpty;

const char* typeName(ChangeType t) {
  switch (t) {
    case ChangeType::kSet:
      return "set";
    case ChangeType::kUnset:
      return "unset";
    case ChangeType::kDeleteObject:
      return "delete-object";
  }
  return "";
}

ChangeType parseType(const std::string& s) {
  if (s == "set") return ChangeType::kSet;
  if (s == "unset") return ChangeType::kUnset;
  if (s == "delete-object") return ChangeType::kDeleteObject;
  throw Error(errc::kBadRequest, "unknown change type " + s);
}

const char* kindName(ConditionKind k) {
  switch (k) {
    case ConditionKind::kHasKey:
      return "has-key";
    case ConditionKind::kNoKey:
      return "no-key";
    case ConditionKind::kValueEquals:
      return "value-equals";
    case ConditionKind::kValueDiffers:
      return "value-differs";
  }
  return "";
}

ConditionKind parseKind(const std::string& s) {
  if (s == "has-key") return ConditionKind::kHasKey;
  if (s == "no-key") return ConditionKind::kNoKey;
  if (s == "value-equals") return ConditionKind::kValueEquals;
  if (s == "value-differs") return ConditionKind::kValueDiffers;
  throw Error(errc::kBadRequest, "unknown condition kind " + s);
}

const std::string* lookup(const Object& object, const std::string& section, const std::string& key) {
  auto s = object.find(section);
  if (s == object.end()) return nullptr;
  auto k = s->second.find(key);
  return k == s->second.end() ? nullptr : &k->second;
}

}  // namespace

bool Condition::holds(const Object& object) const {
  const std::string* v = lookup(object, section, key);
  switch (kind) {
    case ConditionKind::kHasKey:
      return v != nullptr;
    case ConditionKind::kNoKey:
      return v == nullptr;
    case ConditionKind::kValueEquals:
      return v != nullptr && *v == value;
    case ConditionKind::kValueDiffers:
      return v == nullptr || *v != value;
  }
  return false;
}

ChangeRequest ChangeRequest::set(std::string id, std::string section, std::string key, std::string value) {
  ChangeRequest r;
  r.id = std::move(id);
  r.type = ChangeType::kSet;
  r.section = std::move(section);
  r.key = std::move(key);
  r.value = std::move(value);
  return r;
}

ChangeRequest ChangeRequest::unset(std::string id, std::string section, std::string key) {
  ChangeRequest r;
  r.id = std::move(id);
  r.type = ChangeType::kUnset;
  r.section = std::move(section);
  r.key = std::move(key);
  return r;
}

ChangeRequest ChangeRequest::deleteObject(std::string id) {
  ChangeRequest r;
  r.id = std::move(id);
  r.type = ChangeType::kDeleteObject;
  return r;
}

ChangeBatch& ChangeBatch::add(ChangeRequest r) {
  if (r.changeID.empty()) r.changeID = std::to_string(requests.size());
  requests.push_back(std::move(r));
  return *this;
}

const Object& Store::get(const std::string& id) const {
  auto it = objects_.find(id);
  return it == objects_.end() ? kEmpty : it->second;
}

ChangeResults Store::evaluate(const ChangeBatch& batch, std::vector<ChangeRequest>& effects) const {
  ChangeResults results;
  std::vector<const ChangeRequest*> passing;
  bool anyFailed = false;
  std::set<std::string> seen;
  for (const auto& r : batch.requests) {
    if (!seen.insert(r.changeID).second) throw Error(errc::kBadRequest, "duplicate change id " + r.changeID);
    if (r.id.empty() || (r.type != ChangeType::kDeleteObject && (r.section.empty() || r.key.empty()))) {
      results[r.changeID] = std::string(kFailed);
      anyFailed = true;
      continue;
    }
    const Object& pre = get(r.id);
    bool ok = true;
    for (const auto& c : r.conditions) {
      if (!c.holds(pre)) {
        ok = false;
        break;
      }
    }
    if (ok) {
      passing.push_back(&r);
      results[r.changeID] = std::string(kApplied);
    } else {
      results[r.changeID] = std::string(kConditionFailed);
      anyFailed = true;
    }
  }
  effects.clear();
  if (batch.atomic && anyFailed) {
    for (const auto* r : passing) results[r->changeID] = std::string(kFailed);
    return results;
  }
  for (const auto* r : passing) {
    ChangeRequest e = *r;
    e.conditions.clear();
    effects.push_back(std::move(e));
  }
  return results;
}

void Store::apply(const std::vector<ChangeRequest>& effects) {
  for (const auto& e : effects) {
    switch (e.type) {
      case ChangeType::kSet:
        objects_[e.id][e.section][e.key] = e.value;
        break;
      case ChangeType::kUnset: {
        auto o = objects_.find(e.id);
        if (o == objects_.end()) break;
        auto s = o->second.find(e.section);
        if (s == o->second.end()) break;
        s->second.erase(e.key);
        if (s->second.empty()) o->second.erase(s);
        if (o->second.empty()) objects_.erase(o);
        break;
      }
      case ChangeType::kDeleteObject:
        objects_.erase(e.id);
        break;
    }
  }
}

std::string Store::canonical() const { return wire::encode(toValue()); }

Value Store::toValue() const {
  Value out = Value::object();
  for (const auto& [id, obj] : objects_) out[id] = ahash::toValue(obj);
  return out;
}

Store Store::fromValue(const Value& v) {
  Store s;
  for (const auto& [id, obj] : v.items()) {
    auto o = objectFromValue(obj);
    if (!o.empty()) s.objects_[id] = std::move(o);
  }
  return s;
}

Value toValue(const Object& object) {
  Value out = Value::object();
  for (const auto& [section, keys] : object) {
    Value s = Value::object();
    for (const auto& [k, v] : keys) s[k] = v;
    out[section] = std::move(s);
  }
  return out;
}

Object objectFromValue(const Value& v) {
  Object out;
  if (!v.is_object()) return out;
  for (const auto& [section, keys] : v.items()) {
    for (const auto& [k, val] : keys.items()) out[section][k] = val.get<std::string>();
  }
  return out;
}

Value toValue(const ChangeRequest& r) {
  Value c = Value::array();
  for (const auto& cond : r.conditions) {
    c.push_back({{"kind", kindName(cond.kind)}, {"section", cond.section}, {"key", cond.key}, {"value", cond.value}});
  }
  Value out = {{"changeID", r.changeID}, {"id", r.id}, {"type", typeName(r.type)}};
  if (r.type != ChangeType::kDeleteObject) {
    out["section"] = r.section;
    out["key"] = r.key;
    if (r.type == ChangeType::kSet) out["value"] = r.value;
  }
  if (!c.empty()) out["conditions"] = std::move(c);
  return out;
}

ChangeRequest changeFromValue(const Value& v) {
  ChangeRequest r;
  r.changeID = v.value("changeID", std::string());
  r.id = v.value("id", std::string());
  r.type = parseType(v.value("type", std::string("set")));
  r.section = v.value("section", std::string());
  r.key = v.value("key", std::string());
  if (r.type == ChangeType::kSet) {
    if (!v.contains("value")) throw Error(errc::kBadRequest, "set requires a value");
    r.value = v["value"].get<std::string>();
  }
  if (v.contains("conditions")) {
    for (const auto& c : v["conditions"]) {
      r.conditions.push_back({parseKind(c.value("kind", std::string())), c.value("section", std::string()),
                              c.value("key", std::string()), c.value("value", std::string())});
    }
  }
  return r;
}

Value toValue(const ChangeBatch& b) {
  Value reqs = Value::array();
  for (const auto& r : b.requests) reqs.push_back(toValue(r));
  return {{"requests", std::move(reqs)}, {"atomic", b.atomic}};
}

ChangeBatch batchFromValue(const Value& v) {
  ChangeBatch b;
  b.atomic = v.value("atomic", false);
  if (v.contains("requests")) {
    for (const auto& r : v["requests"]) b.requests.push_back(changeFromValue(r));
  }
  return b;
}

std::string field(const Object& object, const std::string& section, const std::string& key) {
  const std::string* v = lookup(object, section, key);
  return v ? *v : std::string();
}

}  // namespace chelonia::ahash
