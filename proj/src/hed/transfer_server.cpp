#include "chelonia/hed/transfer_server.hpp"

#include <httplib.h>

#include "chelonia/core/errors.hpp"

namespace chelonia::hed {

namespace {

void fail(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  res.status = status;
  res.set_header("X-Error-Code", code);
  res.set_content(message, "text/plain");
}

}  // namespace

TransferServer::TransferServer(Host& host, std::string bindAddress, std::uint16_t port)
    : host_(host), bindAddress_(std::move(bindAddress)), port_(port) {}

TransferServer::~TransferServer() { stop(); }

void TransferServer::start() {
  server_ = std::make_unique<httplib::Server>();
  server_->Put(R"(/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    auto handler = host_.transferHandler();
    if (!handler) return fail(res, 404, std::string(errc::kUnknownTarget), "no transfers here");
    try {
      handler->upload(req.matches[1], Bytes(req.body.begin(), req.body.end()));
      res.status = 200;
    } catch (const Error& e) {
      fail(res, 403, e.code(), e.message());
    }
  });
  server_->Get(R"(/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    auto handler = host_.transferHandler();
    if (!handler) return fail(res, 404, std::string(errc::kUnknownTarget), "no transfers here");
    try {
      Bytes body = handler->download(req.matches[1]);
      res.set_content(std::string(body.begin(), body.end()), "application/octet-stream");
    } catch (const Error& e) {
      fail(res, 403, e.code(), e.message());
    }
  });
  if (port_ == 0) {
    int bound = server_->bind_to_any_port(bindAddress_);
    if (bound < 0) throw Error(errc::kTransportFailure, "cannot bind transfer endpoint");
    port_ = static_cast<std::uint16_t>(bound);
  } else if (!server_->bind_to_port(bindAddress_, port_)) {
    throw Error(errc::kTransportFailure, "cannot bind transfer endpoint to port " + std::to_string(port_));
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
}

void TransferServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
  server_.reset();
}

}  // namespace chelonia::hed
