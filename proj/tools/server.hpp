#pragma once

// HTTP + WebSocket front for the session hub: `/ws` upgrades to the control
// and frame stream, every other GET is served from the static viewer bundle.
// All sockets run on one io_context thread.

#include <boost/asio.hpp>
#include <boost/beast.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <thread>

#include "vrbridge/error.hpp"
#include "vrbridge/protocol.hpp"

namespace vrbridge::serve {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
namespace fs = std::filesystem;

inline std::pair<std::string, unsigned short> split_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) fail(ErrorCode::ConfigError, "serve address must be host:port, got '" + addr + "'");
  const std::string host = addr.substr(0, colon), port = addr.substr(colon + 1);
  unsigned long p = 0;
  try {
    std::size_t used = 0;
    p = std::stoul(port, &used);
    if (used != port.size() || p > 65535) throw std::out_of_range(port);
  } catch (const std::exception&) {
    fail(ErrorCode::ConfigError, "bad port in serve address '" + addr + "'");
  }
  return {host.empty() ? "0.0.0.0" : host, static_cast<unsigned short>(p)};
}

inline const char* mime_type(const fs::path& p) {
  const auto e = p.extension().string();
  if (e == ".html") return "text/html; charset=utf-8";
  if (e == ".js") return "text/javascript; charset=utf-8";
  if (e == ".css") return "text/css; charset=utf-8";
  if (e == ".json") return "application/json";
  if (e == ".png") return "image/png";
  if (e == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket sock, wire::Hub& hub) : ws_(std::move(sock)), hub_(hub), timer_(ws_.get_executor()) {}

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->id_ = self->hub_.connect();
      self->queue_ = self->hub_.queue(self->id_);
      self->read();
      self->pump();
    });
  }

 private:
  void read() {
    ws_.async_read(in_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->close();
      const std::string data = beast::buffers_to_string(self->in_.data());
      self->in_.consume(self->in_.size());
      if (self->ws_.got_text()) self->hub_.on_text(self->id_, data);
      else self->hub_.on_binary(self->id_, wire::as_bytes(data));
      self->read();
    });
  }

  // Writes queued messages one at a time; idles on a short timer when empty.
  void pump() {
    if (closed_) return;
    auto m = queue_->pop(std::chrono::milliseconds(0));
    if (!m) {
      if (queue_->closed()) return close();
      timer_.expires_after(std::chrono::milliseconds(2));
      timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
        if (!ec) self->pump();
      });
      return;
    }
    out_ = std::move(m->data);
    ws_.binary(m->binary);
    ws_.async_write(asio::buffer(out_), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->close();
      self->pump();
    });
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    timer_.cancel();
    if (id_) hub_.disconnect(id_);
    beast::error_code ec;
    beast::get_lowest_layer(ws_).close(ec);
  }

  websocket::stream<tcp::socket> ws_;
  wire::Hub& hub_;
  asio::steady_timer timer_;
  beast::flat_buffer in_;
  std::string out_;
  std::shared_ptr<wire::ClientQueue> queue_;
  int id_ = 0;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket sock, wire::Hub& hub, fs::path root) : sock_(std::move(sock)), hub_(hub), root_(std::move(root)) {}

  void start() {
    http::async_read(sock_, buf_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->handle();
    });
  }

 private:
  void handle() {
    if (websocket::is_upgrade(req_)) {
      if (req_.target() == "/ws") {
        std::make_shared<WsSession>(std::move(sock_), hub_)->start(std::move(req_));
        return;
      }
      return respond(http::status::not_found, "text/plain", "websocket endpoint is /ws\n");
    }
    if (req_.method() != http::verb::get && req_.method() != http::verb::head)
      return respond(http::status::method_not_allowed, "text/plain", "GET only\n");
    std::string target(req_.target());
    if (const auto q = target.find('?'); q != std::string::npos) target.resize(q);
    if (target.empty() || target == "/") target = "/index.html";
    if (target.find("..") != std::string::npos) return respond(http::status::bad_request, "text/plain", "bad path\n");
    const fs::path file = root_ / target.substr(1);
    std::ifstream in(file, std::ios::binary);
    if (!in) return respond(http::status::not_found, "text/plain", "not found\n");
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    respond(http::status::ok, mime_type(file), std::move(body));
  }

  void respond(http::status st, const char* type, std::string body) {
    auto res = std::make_shared<http::response<http::string_body>>(st, req_.version());
    res->set(http::field::server, "vrbridge");
    res->set(http::field::content_type, type);
    res->keep_alive(false);
    res->body() = req_.method() == http::verb::head ? std::string() : std::move(body);
    res->prepare_payload();
    http::async_write(sock_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
      beast::error_code ec;
      self->sock_.shutdown(tcp::socket::shutdown_send, ec);
    });
  }

  tcp::socket sock_;
  wire::Hub& hub_;
  fs::path root_;
  beast::flat_buffer buf_;
  http::request<http::string_body> req_;
};

class Server {
 public:
  /// Binds immediately so address errors surface before the frame loop starts.
  Server(wire::Hub& hub, const std::string& address, fs::path static_root)
      : hub_(hub), root_(std::move(static_root)), acceptor_(ioc_) {
    const auto [host, port] = split_address(address);
    beast::error_code ec;
    const auto ip = asio::ip::make_address(host, ec);
    if (ec) fail(ErrorCode::ConfigError, "bad host in serve address '" + address + "'");
    tcp::endpoint ep(ip, port);
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) fail(ErrorCode::BindError, "cannot listen on " + address + ": " + ec.message());
  }

  ~Server() { stop(); }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void start() {
    accept();
    thread_ = std::thread([this] { ioc_.run(); });
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    hub_.close_all();
    asio::post(ioc_, [this] {
      beast::error_code ec;
      acceptor_.close(ec);
    });
    // let writers flush what the hub already queued
    auto guard = std::chrono::steady_clock::now() + std::chrono::milliseconds(200);
    while (std::chrono::steady_clock::now() < guard && hub_.client_count() > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    ioc_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  void accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket sock) {
      if (ec) return;
      std::make_shared<HttpSession>(std::move(sock), hub_, root_)->start();
      accept();
    });
  }

  wire::Hub& hub_;
  fs::path root_;
  asio::io_context ioc_;
  tcp::acceptor acceptor_;
  std::thread thread_;
  std::atomic<bool> stopped_{false};
};

}  // namespace vrbridge::serve
