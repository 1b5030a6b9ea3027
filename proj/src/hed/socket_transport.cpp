#include "chelonia/hed/socket_transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <httplib.h>

#include "chelonia/core/errors.hpp"
#include "chelonia/hed/sim_network.hpp"

namespace chelonia::hed {
namespace {

bool writeAll(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

// Reads one frame; returns false on EOF, error or timeout.
bool readFrame(int fd, std::string& buffer, Value& out, int timeoutMs) {
  for (;;) {
    if (std::size_t used = wire::unframe(buffer, out)) {
      buffer.erase(0, used);
      return true;
    }
    if (timeoutMs >= 0) {
      pollfd p{fd, POLLIN, 0};
      int r = ::poll(&p, 1, timeoutMs);
      if (r <= 0) return false;
    }
    char chunk[64 * 1024];
    ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
}

std::pair<std::string, std::string> splitHostPort(const std::string& hostPort) {
  auto colon = hostPort.rfind(':');
  if (colon == std::string::npos) throw Error(errc::kBadRequest, "missing port in " + hostPort);
  return {hostPort.substr(0, colon), hostPort.substr(colon + 1)};
}

}  // namespace

struct SocketServer::Connection {
  int fd;
  std::mutex writeMu;
  std::atomic<bool> open{true};
};

SocketServer::SocketServer(Host& host, std::string bindAddress, std::uint16_t port)
    : host_(host), bindAddress_(std::move(bindAddress)), port_(port) {}

SocketServer::~SocketServer() { stop(); }

void SocketServer::start() {
  listenFd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listenFd_ < 0) throw Error(errc::kTransportFailure, "socket() failed");
  int one = 1;
  ::setsockopt(listenFd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port_);
  if (::inet_pton(AF_INET, bindAddress_.c_str(), &addr.sin_addr) != 1) {
    throw Error(errc::kBadRequest, "bad bind address " + bindAddress_);
  }
  if (::bind(listenFd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listenFd_, 128) != 0) {
    ::close(listenFd_);
    listenFd_ = -1;
    throw Error(errc::kTransportFailure, "cannot listen on " + bindAddress_ + ":" + std::to_string(port_) + ": " +
                                             std::strerror(errno));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listenFd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  for (std::size_t i = 0; i < host_.pool().maxConcurrent; ++i) workers_.emplace_back([this] { workerLoop(); });
  acceptThread_ = std::thread([this] { acceptLoop(); });
}

void SocketServer::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listenFd_, SHUT_RDWR);
  ::close(listenFd_);
  if (acceptThread_.joinable()) acceptThread_.join();
  cv_.notify_all();
  for (auto& w : workers_) w.join();
  workers_.clear();
  std::list<std::pair<std::shared_ptr<Connection>, std::thread>> conns;
  {
    std::lock_guard lock(mu_);
    conns.swap(connections_);
    queue_.clear();
  }
  for (auto& [conn, thread] : conns) {
    conn->open = false;
    ::shutdown(conn->fd, SHUT_RDWR);
    if (thread.joinable()) thread.join();
    ::close(conn->fd);
  }
}

std::size_t SocketServer::inFlight() const {
  std::lock_guard lock(mu_);
  return active_ + queue_.size();
}

void SocketServer::acceptLoop() {
  while (running_) {
    int fd = ::accept(listenFd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    auto conn = std::make_shared<Connection>();
    conn->fd = fd;
    std::lock_guard lock(mu_);
    connections_.emplace_back(conn, std::thread([this, conn] { readLoop(conn); }));
  }
}

void SocketServer::readLoop(std::shared_ptr<Connection> conn) {
  std::string buffer;
  while (running_ && conn->open) {
    Value frame;
    try {
      if (!readFrame(conn->fd, buffer, frame, -1)) break;
    } catch (const Error&) {
      break;
    }
    Job job;
    job.conn = conn;
    job.id = frame.value("id", std::uint64_t{0});
    job.env.requestID = frame.value("rid", std::string());
    job.env.callerDN = frame.value("dn", std::string());
    job.env.callerSecret = frame.value("secret", std::string());
    job.env.target.url = frame.value("target", std::string());
    job.env.operation = frame.value("op", std::string());
    auto payload = wire::toBytes(frame["payload"]);
    job.env.payload.assign(payload.begin(), payload.end());
    bool full = false;
    {
      std::lock_guard lock(mu_);
      if (active_ + queue_.size() >= host_.pool().maxConcurrent + host_.pool().queueCapacity) {
        full = true;
      } else {
        queue_.push_back(std::move(job));
      }
    }
    if (full) {
      reply(conn, frame.value("id", std::uint64_t{0}), errorResponse(errc::kQueueFull, "host " + host_.name() + " is saturated"));
    } else {
      cv_.notify_one();
    }
  }
  conn->open = false;
}

void SocketServer::workerLoop() {
  for (;;) {
    Job job;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return !running_ || !queue_.empty(); });
      if (!running_) return;
      job = std::move(queue_.front());
      queue_.pop_front();
      ++active_;
    }
    Response response = host_.dispatch(job.env);
    reply(job.conn, job.id, response);
    std::lock_guard lock(mu_);
    --active_;
  }
}

void SocketServer::reply(const std::shared_ptr<Connection>& conn, std::uint64_t id, const Response& response) {
  Value frame = {{"id", id},
                 {"ok", response.ok},
                 {"payload", Value::binary(Bytes(response.payload.begin(), response.payload.end()))}};
  auto bytes = wire::frame(frame);
  std::lock_guard lock(conn->writeMu);
  if (conn->open) writeAll(conn->fd, bytes);
}

SocketTransport::SocketTransport(double timeoutSeconds) : timeout_(timeoutSeconds) {}

SocketTransport::~SocketTransport() {
  for (auto& [_, fds] : idle_) {
    for (int fd : fds) ::close(fd);
  }
}

int SocketTransport::connect(const std::string& hostPort) const {
  auto [host, port] = splitHostPort(hostPort);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
    throw Error(errc::kTransportFailure, "cannot resolve " + hostPort);
  }
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0 || ::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
    if (fd >= 0) ::close(fd);
    ::freeaddrinfo(res);
    throw Error(errc::kTransportFailure, "cannot connect to " + hostPort);
  }
  ::freeaddrinfo(res);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

int SocketTransport::acquire(const std::string& hostPort) {
  {
    std::lock_guard lock(mu_);
    auto& fds = idle_[hostPort];
    if (!fds.empty()) {
      int fd = fds.back();
      fds.pop_back();
      return fd;
    }
  }
  return connect(hostPort);
}

void SocketTransport::release(const std::string& hostPort, int fd) {
  std::lock_guard lock(mu_);
  idle_[hostPort].push_back(fd);
}

Response SocketTransport::call(const RequestEnvelope& env) {
  auto url = parseUrl(env.target.url);
  if (url.scheme != "tcp") throw Error(errc::kUnknownTarget, env.target.url);
  static std::atomic<std::uint64_t> frameIds{0};
  std::uint64_t id = ++frameIds;
  Value frame = {{"id", id},
                 {"rid", env.requestID},
                 {"dn", env.callerDN},
                 {"secret", env.callerSecret},
                 {"target", env.target.url},
                 {"op", env.operation},
                 {"payload", Value::binary(Bytes(env.payload.begin(), env.payload.end()))}};
  auto bytes = wire::frame(frame);
  // A pooled connection may have been closed by the peer; retry once on a
  // fresh one before reporting failure.
  for (int attempt = 0; attempt < 2; ++attempt) {
    int fd = attempt == 0 ? acquire(url.host) : connect(url.host);
    if (!writeAll(fd, bytes)) {
      ::close(fd);
      continue;
    }
    messages_ += 1;
    bytes_ += env.payload.size();
    std::string buffer;
    Value reply;
    bool got = false;
    try {
      got = readFrame(fd, buffer, reply, static_cast<int>(timeout_ * 1000));
    } catch (const Error&) {
      got = false;
    }
    if (!got) {
      ::close(fd);
      if (attempt == 0) continue;
      throw Error(errc::kTransportFailure, "no response from " + url.host);
    }
    release(url.host, fd);
    Response response;
    response.ok = reply.value("ok", false);
    auto payload = wire::toBytes(reply["payload"]);
    response.payload.assign(payload.begin(), payload.end());
    messages_ += 1;
    bytes_ += response.payload.size();
    return response;
  }
  throw Error(errc::kTransportFailure, "cannot reach " + url.host);
}

void SocketTransport::upload(const std::string& url, const Bytes& body) {
  auto parsed = parseUrl(url);
  if (parsed.scheme != "http") throw Error(errc::kUnknownTarget, url);
  auto [host, port] = splitHostPort(parsed.host);
  httplib::Client client(host, std::stoi(port));
  client.set_read_timeout(static_cast<time_t>(timeout_), 0);
  auto res = client.Put("/" + parsed.path, reinterpret_cast<const char*>(body.data()), body.size(),
                        "application/octet-stream");
  messages_ += 2;
  bytes_ += body.size();
  if (!res) throw Error(errc::kTransportFailure, "upload to " + parsed.host + " failed");
  if (res->status != 200) {
    auto code = res->get_header_value("X-Error-Code");
    throw Error(code.empty() ? std::string(errc::kTicketInvalid) : code, res->body);
  }
}

Bytes SocketTransport::download(const std::string& url) {
  auto parsed = parseUrl(url);
  if (parsed.scheme != "http") throw Error(errc::kUnknownTarget, url);
  auto [host, port] = splitHostPort(parsed.host);
  httplib::Client client(host, std::stoi(port));
  client.set_read_timeout(static_cast<time_t>(timeout_), 0);
  auto res = client.Get("/" + parsed.path);
  messages_ += 2;
  if (!res) throw Error(errc::kTransportFailure, "download from " + parsed.host + " failed");
  if (res->status != 200) {
    auto code = res->get_header_value("X-Error-Code");
    throw Error(code.empty() ? std::string(errc::kTicketInvalid) : code, res->body);
  }
  bytes_ += res->body.size();
  return Bytes(res->body.begin(), res->body.end());
}

TransportStats SocketTransport::stats() const { return {messages_.load(), bytes_.load(), 0.0, 0.0}; }

void SocketTransport::resetStats() {
  messages_ = 0;
  bytes_ = 0;
}

void setSimulatedNetwork(Transport& transport, double latency, double bandwidth) {
  auto* sim = dynamic_cast<SimNetwork*>(&transport);
  if (!sim) throw Error(errc::kNotSimulation, "network profile applies to the simulation transport only");
  sim->setSimulatedNetwork(latency, bandwidth);
}

}  // namespace chelonia::hed
