#include "chelonia/cli/cli.hpp"

#include <fstream>
#include <iostream>
#include <iterator>
#include <map>

#include "chelonia/ahash/store.hpp"
#include "chelonia/core/digest.hpp"
#include "chelonia/core/errors.hpp"
#include "chelonia/hed/failover.hpp"
#include "chelonia/librarian/metadata.hpp"

namespace chelonia::cli {

namespace {

const char* kUsage =
    "usage: chelonia <command> ...\n"
    "  put <local|-> <ln> [neededReplicas]\n"
    "  get <ln> [local|-]\n"
    "  list <ln>\n"
    "  stat <ln>\n"
    "  mkdir <ln>\n"
    "  rm <ln>\n"
    "  move <src> <dst>\n"
    "  mount <ln> <url>\n";

struct UsageError {};

Bytes readLocal(const std::string& path) {
  if (path == "-") return Bytes(std::istreambuf_iterator<char>(std::cin), {});
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::kNotFound, "cannot read " + path);
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

void writeLocal(const std::string& path, const Bytes& data, std::ostream& out) {
  if (path == "-") {
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!f) throw Error(errc::kBackendFailure, "cannot write " + path);
}

std::string baseName(const std::string& ln) {
  auto pos = ln.find_last_of('/');
  return pos == std::string::npos ? ln : ln.substr(pos + 1);
}

void need(const std::vector<std::string>& args, std::size_t min, std::size_t max) {
  if (args.size() < min || args.size() > max) throw UsageError{};
}

int put(const std::vector<std::string>& a, Client& c, std::ostream& out) {
  need(a, 3, 4);
  Bytes data = readLocal(a[1]);
  int needed = a.size() == 4 ? std::stoi(a[3]) : c.config().defaultNeededReplicas;
  if (needed < 1) throw Error(errc::kBadRequest, "neededReplicas must be at least 1");
  Value r = c.call("putFile", {{"ln", a[2]},
                               {"size", data.size()},
                               {"checksum", checksum(data)},
                               {"checksumType", std::string(kDefaultChecksumType)},
                               {"neededReplicas", needed}});
  c.upload(r.at("url").get<std::string>(), data);
  out << "put " << a[2] << " " << data.size() << " " << r.at("guid").get<std::string>() << "\n";
  return 0;
}

int get(const std::vector<std::string>& a, Client& c, std::ostream& out) {
  need(a, 2, 3);
  std::string local = a.size() == 3 ? a[2] : baseName(a[1]);
  Value r = c.call("getFile", {{"ln", a[1]}});
  std::string url = r.at("url").get<std::string>();
  if (r.at("external").get<bool>() && !c.handles(url)) {
    out << "external " << url << "\n";
    return 0;
  }
  Bytes data = c.download(url);
  if (r.contains("checksum") && checksum(data, r.at("checksumType").get<std::string>()) != r.at("checksum")) {
    throw Error(errc::kChecksumMismatch, a[1]);
  }
  writeLocal(local, data, out);
  if (local != "-") out << "get " << a[1] << " " << data.size() << " " << local << "\n";
  return 0;
}

int list(const std::vector<std::string>& a, Client& c, std::ostream& out) {
  need(a, 2, 2);
  Value entries = c.call("list", {{"ln", a[1]}}).at("entries");
  for (const auto& [name, e] : entries.items()) out << e.at("type").get<std::string>() << "\t" << name << "\n";
  return 0;
}

int stat(const std::vector<std::string>& a, Client& c, std::ostream& out) {
  need(a, 2, 2);
  Value r = c.call("stat", {{"ln", a[1]}});
  std::string type = r.at("type");
  out << "type " << type << "\n";
  if (type == "external") {
    out << "url " << r.at("url").get<std::string>() << "\n";
    return 0;
  }
  out << "guid " << r.at("guid").get<std::string>() << "\n";
  auto m = librarian::fromObject(r.at("guid"), ahash::objectFromValue(r.at("metadata")));
  if (m.type == librarian::EntryType::kFile) {
    out << "size " << m.size << "\n";
    out << "checksum " << m.checksumType << ":" << m.checksum << "\n";
    out << "neededReplicas " << m.neededReplicas << "\n";
    for (const auto& [key, state] : m.locations) {
      auto [url, ref] = librarian::splitLocation(key);
      out << "replica " << state << " " << url << " " << ref << "\n";
    }
  } else if (m.type == librarian::EntryType::kCollection) {
    out << "entries " << m.entries.size() << "\n";
  } else {
    out << "url " << m.mountURL << "\n";
  }
  for (const auto& rule : m.policy) out << "policy " << rule.toString() << "\n";
  return 0;
}

int rm(const std::vector<std::string>& a, Client& c) {
  need(a, 2, 2);
  try {
    c.call("delFile", {{"ln", a[1]}});
  } catch (const Error& e) {
    if (!e.is(errc::kIsCollection)) throw;
    c.call("unmakeCollection", {{"ln", a[1]}});
  }
  return 0;
}

}  // namespace

ClientConfig ClientConfig::fromConfig(const Config& config) {
  ClientConfig c;
  const ConfigSection* s = config.find("client");
  if (!s) throw Error(errc::kBadRequest, "configuration has no [client] section");
  c.bartenderURLs = s->getList("bartender");
  c.defaultNeededReplicas = static_cast<int>(s->getInt("neededReplicas", 1));
  c.identityDN = s->getString("dn", "CN=user");
  c.secret = s->getString("secret");
  c.attempts = static_cast<int>(s->getInt("attempts", 5));
  c.backoff = s->getDouble("backoff", 0.5);
  if (c.bartenderURLs.empty()) throw Error(errc::kBadRequest, "no bartender configured");
  if (c.defaultNeededReplicas < 1) throw Error(errc::kBadRequest, "neededReplicas must be at least 1");
  if (c.attempts < 1) throw Error(errc::kBadRequest, "attempts must be at least 1");
  return c;
}

ClientConfig ClientConfig::load(const std::filesystem::path& path) { return fromConfig(Config::load(path)); }

Client::Client(hed::Transport& transport, hed::Runtime& runtime, ClientConfig config)
    : rpc_(transport, config.identityDN, config.secret), runtime_(runtime), config_(std::move(config)) {
  if (config_.bartenderURLs.empty()) throw Error(errc::kBadRequest, "no bartender configured");
}

Value Client::call(const std::string& operation, const Value& args) {
  double delay = config_.backoff;
  std::string last;
  for (int attempt = 0; attempt < config_.attempts; ++attempt) {
    if (attempt > 0) {
      ++retries_;
      runtime_.sleep(delay);
      delay *= 2;
    }
    const auto& urls = config_.bartenderURLs;
    for (std::size_t i = 0; i < urls.size(); ++i) {
      std::size_t idx = (preferred_ + i) % urls.size();
      try {
        Value r = rpc_.call(urls[idx], operation, args);
        preferred_ = idx;
        return r;
      } catch (const Error& e) {
        if (!hed::unreachable(e)) throw;
        last = e.what();
      }
    }
  }
  throw Error(errc::kBartenderUnavailable, last);
}

bool Client::handles(const std::string& url) const {
  auto pos = url.find("://");
  return pos != std::string::npos && schemes_.count(url.substr(0, pos)) > 0;
}

int exitCodeFor(const std::string& code) {
  static const std::set<std::string, std::less<>> user{
      std::string(errc::kNotFound),      std::string(errc::kParentMissing),  std::string(errc::kNameTaken),
      std::string(errc::kAccessDenied),  std::string(errc::kNotEmpty),       std::string(errc::kNotACollection),
      std::string(errc::kNotAFile),      std::string(errc::kIsCollection),   std::string(errc::kInvalidName),
      std::string(errc::kBadRequest),    std::string(errc::kUntrusted),      std::string(errc::kUnknownOperation)};
  if (code.empty()) return 0;
  return user.count(code) ? 1 : 2;
}

int run(const std::vector<std::string>& args, Client& client, std::ostream& out, std::ostream& err) {
  try {
    if (args.empty()) throw UsageError{};
    const std::string& cmd = args[0];
    if (cmd == "put") return put(args, client, out);
    if (cmd == "get") return get(args, client, out);
    if (cmd == "list") return list(args, client, out);
    if (cmd == "stat") return stat(args, client, out);
    if (cmd == "rm") return rm(args, client);
    if (cmd == "mkdir") {
      need(args, 2, 2);
      client.call("makeCollection", {{"ln", args[1]}});
      return 0;
    }
    if (cmd == "move") {
      need(args, 3, 3);
      client.call("move", {{"src", args[1]}, {"dst", args[2]}});
      return 0;
    }
    if (cmd == "mount") {
      need(args, 3, 3);
      client.call("mount", {{"ln", args[1]}, {"url", args[2]}});
      return 0;
    }
    throw UsageError{};
  } catch (const UsageError&) {
    err << kUsage;
    return 1;
  } catch (const Error& e) {
    err << "error " << e.code() << " " << (e.message().empty() ? e.code() : e.message()) << "\n";
    return exitCodeFor(e.code());
  } catch (const std::invalid_argument&) {
    err << kUsage;
    return 1;
  }
}

}  // namespace chelonia::cli
