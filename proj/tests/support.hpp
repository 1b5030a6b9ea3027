#pragma once

#include <functional>
#include <map>
#include <string>

#include "chelonia/core/digest.hpp"
#include "chelonia/core/errors.hpp"
#include "chelonia/harness/deployment.hpp"

namespace testsupport {

using chelonia::Bytes;
using chelonia::Value;

inline std::string code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const chelonia::Error& e) {
    return e.code();
  }
  return "ok";
}

inline Bytes pattern(std::size_t n, unsigned seed = 7) {
  Bytes b(n);
  for (std::size_t i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>((i * 131 + seed) & 0xff);
  return b;
}

// Uploads `data` to `ln` through bartender 0; returns the GUID.
inline std::string putFile(chelonia::harness::Deployment& d, const std::string& ln, const Bytes& data,
                           int needed = 1) {
  auto rpc = d.client();
  Value r = rpc.call(d.bartenderURLs()[0], "putFile",
                     {{"ln", ln}, {"size", data.size()}, {"checksum", chelonia::checksum(data)}, {"neededReplicas", needed}});
  rpc.upload(r.at("url").get<std::string>(), data);
  return r.at("guid").get<std::string>();
}

inline Bytes getFile(chelonia::harness::Deployment& d, const std::string& ln) {
  auto rpc = d.client();
  Value r = rpc.call(d.bartenderURLs()[0], "getFile", {{"ln", ln}});
  return rpc.download(r.at("url").get<std::string>());
}

// Replica states of `guid` keyed by shepherd URL, read from the store.
inline std::multimap<std::string, std::string> locations(chelonia::harness::Deployment& d, const std::string& guid) {
  std::multimap<std::string, std::string> out;
  auto store = d.store();
  auto m = chelonia::librarian::fromObject(guid, store.get(guid));
  for (const auto& [key, state] : m.locations) out.emplace(chelonia::librarian::splitLocation(key).first, state);
  return out;
}

inline std::size_t countState(chelonia::harness::Deployment& d, const std::string& guid, const std::string& state) {
  std::size_t n = 0;
  for (const auto& [_, s] : locations(d, guid)) n += s == state;
  return n;
}

}  // namespace testsupport
