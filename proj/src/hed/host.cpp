#include "chelonia/hed/host.hpp"

#include "chelonia/core/errors.hpp"

namespace chelonia::hed {

ParsedUrl parseUrl(std::string_view url) {
  auto sep = url.find("://");
  if (sep == std::string_view::npos || sep == 0) throw Error(errc::kBadRequest, "malformed URL " + std::string(url));
  ParsedUrl out;
  out.scheme = std::string(url.substr(0, sep));
  auto rest = url.substr(sep + 3);
  auto slash = rest.find('/');
  if (slash == std::string_view::npos) {
    out.host = std::string(rest);
  } else {
    out.host = std::string(rest.substr(0, slash));
    out.path = std::string(rest.substr(slash + 1));
  }
  if (out.host.empty()) throw Error(errc::kBadRequest, "malformed URL " + std::string(url));
  return out;
}

Host::Host(std::string name, std::string baseURL, WorkerPoolConfig pool)
    : name_(std::move(name)), baseURL_(std::move(baseURL)), pool_(pool) {
  if (pool_.maxConcurrent == 0) throw Error(errc::kBadRequest, "maxConcurrent must be at least 1");
}

ServiceEndpoint Host::registerService(const std::string& name, Handler handler, std::string dn) {
  if (name.empty() || name.find('/') != std::string::npos) throw Error(errc::kBadRequest, "bad service name");
  if (dn.empty()) throw Error(errc::kBadRequest, "service DN must be non-empty");
  std::lock_guard lock(mu_);
  if (services_.count(name)) throw Error(errc::kDuplicateName, name);
  Entry entry;
  entry.handler = std::move(handler);
  entry.endpoint = {baseURL_ + "/" + name, std::move(dn)};
  auto ep = entry.endpoint;
  services_.emplace(name, std::move(entry));
  return ep;
}

void Host::unregisterService(const std::string& name) {
  std::lock_guard lock(mu_);
  services_.erase(name);
}

void Host::setTrustedDNs(const std::string& service, std::vector<std::string> dns) {
  std::lock_guard lock(mu_);
  auto it = services_.find(service);
  if (it == services_.end()) throw Error(errc::kUnknownTarget, service);
  it->second.trusted = std::set<std::string>(dns.begin(), dns.end());
}

void Host::setPublicOperations(const std::string& service, std::set<std::string> ops) {
  std::lock_guard lock(mu_);
  auto it = services_.find(service);
  if (it == services_.end()) throw Error(errc::kUnknownTarget, service);
  it->second.publicOps = std::move(ops);
}

void Host::setIdentitySecrets(std::map<std::string, std::string> secrets) {
  std::lock_guard lock(mu_);
  secrets_ = std::move(secrets);
}

bool Host::checkTrust(const std::string& callerDN, const ServiceEndpoint& target) const {
  auto parsed = parseUrl(target.url);
  std::lock_guard lock(mu_);
  auto it = services_.find(parsed.path);
  if (it == services_.end()) return false;
  return it->second.trusted.count(callerDN) > 0;
}

bool Host::hosts(const std::string& service) const {
  std::lock_guard lock(mu_);
  return services_.count(service) > 0;
}

std::optional<ServiceEndpoint> Host::endpoint(const std::string& service) const {
  std::lock_guard lock(mu_);
  auto it = services_.find(service);
  if (it == services_.end()) return std::nullopt;
  return it->second.endpoint;
}

std::vector<std::string> Host::services() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [name, _] : services_) out.push_back(name);
  return out;
}

bool Host::authenticated(const RequestEnvelope& env) const {
  // Identities with a configured secret must present it; others are taken
  // as asserted (simulation, or anonymous users on client-facing calls).
  auto it = secrets_.find(env.callerDN);
  if (it == secrets_.end()) return true;
  return it->second == env.callerSecret;
}

Response Host::dispatch(const RequestEnvelope& env) const {
  Handler handler;
  {
    std::lock_guard lock(mu_);
    auto service = parseUrl(env.target.url).path;
    auto it = services_.find(service);
    if (it == services_.end()) return errorResponse(errc::kUnknownTarget, env.target.url);
    const Entry& entry = it->second;
    bool isPublic = entry.publicOps.count(env.operation) > 0;
    if (!authenticated(env)) return errorResponse(errc::kUntrusted, "bad credentials for " + env.callerDN);
    if (!isPublic && entry.trusted.count(env.callerDN) == 0) {
      return errorResponse(errc::kUntrusted, env.callerDN + " may not call " + service + "." + env.operation);
    }
    handler = entry.handler;
  }
  try {
    CallContext ctx{env.requestID, env.callerDN, env.operation, wire::decode(env.payload)};
    Value result = handler(ctx);
    return Response{true, wire::encode(result)};
  } catch (const Error& e) {
    return errorResponse(e.code(), e.message(), e.detail());
  } catch (const std::exception& e) {
    return errorResponse("internal-error", e.what());
  }
}

void Host::setTransferHandler(TransferHandler handler) {
  std::lock_guard lock(mu_);
  transfer_ = std::move(handler);
}

std::optional<TransferHandler> Host::transferHandler() const {
  std::lock_guard lock(mu_);
  return transfer_;
}

Response errorResponse(std::string_view code, const std::string& message, const Value& detail) {
  Value body = {{"code", std::string(code)}, {"message", message}, {"detail", detail}};
  return Response{false, wire::encode(body)};
}

Value unpack(const Response& response) {
  Value body = wire::decode(response.payload);
  if (response.ok) return body;
  throw Error(body.value("code", std::string("internal-error")), body.value("message", std::string()),
              body.contains("detail") ? body["detail"] : Value());
}

}  // namespace chelonia::hed
