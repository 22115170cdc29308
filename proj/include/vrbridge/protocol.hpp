#pragma once

// Session hub between the network server and the frame loop. The server
// reports connects, disconnects and inbound messages; the loop drains param
// edits and publishes frames. Each client owns an outbound queue that drops
// its oldest frames under backpressure and never drops text messages.

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrbridge/error.hpp"
#include "vrbridge/hmdsim.hpp"
#include "vrbridge/wire.hpp"

namespace vrbridge::wire {

struct Outbound {
  bool binary = false;
  std::string data;
};

class ClientQueue {
 public:
  explicit ClientQueue(std::size_t max_frames = 2) : max_frames_(std::max<std::size_t>(max_frames, 1)) {}

  void push_text(std::string s) {
    {
      std::lock_guard lock(mu_);
      if (closed_) return;
      q_.push_back({false, std::move(s)});
    }
    cv_.notify_one();
  }

  void push_frame(std::string bytes) {
    {
      std::lock_guard lock(mu_);
      if (closed_) return;
      std::size_t frames = 0;
      for (const auto& m : q_) frames += m.binary;
      while (frames >= max_frames_) {
        for (auto it = q_.begin(); it != q_.end(); ++it)
          if (it->binary) {
            q_.erase(it);
            ++dropped_;
            break;
          }
        --frames;
      }
      q_.push_back({true, std::move(bytes)});
    }
    cv_.notify_one();
  }

  /// Waits up to `timeout`; nullopt on timeout or once closed and drained.
  std::optional<Outbound> pop(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return std::nullopt;
    Outbound m = std::move(q_.front());
    q_.pop_front();
    return m;
  }

  std::vector<Outbound> drain() {
    std::lock_guard lock(mu_);
    std::vector<Outbound> out(std::make_move_iterator(q_.begin()), std::make_move_iterator(q_.end()));
    q_.clear();
    return out;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }
  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }
  std::size_t dropped_frames() const {
    std::lock_guard lock(mu_);
    return dropped_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Outbound> q_;
  std::size_t max_frames_;
  std::size_t dropped_ = 0;
  bool closed_ = false;
};

enum class Role { Pilot, Observer };

inline const char* to_string(Role r) { return r == Role::Pilot ? "pilot" : "observer"; }

struct PendingParam {
  int client = 0;
  ParamMsg msg;
};

class Hub {
 public:
  explicit Hub(std::shared_ptr<hmd::LiveMailbox> mailbox = nullptr, std::size_t max_frames = 2)
      : mailbox_(std::move(mailbox)), max_frames_(max_frames) {}

  /// Parameter table and config sent to each client on connect.
  void set_announcement(nlohmann::json a) {
    std::lock_guard lock(mu_);
    announcement_ = std::move(a);
  }

  int connect() {
    std::lock_guard lock(mu_);
    const int id = ++next_id_;
    Client c;
    c.queue = std::make_shared<ClientQueue>(max_frames_);
    if (pilot_ == 0) pilot_ = id;
    clients_.emplace(id, c);
    nlohmann::json hello = announcement_.is_object() ? announcement_ : nlohmann::json::object();
    hello["type"] = "hello";
    hello["client"] = id;
    hello["role"] = to_string(id == pilot_ ? Role::Pilot : Role::Observer);
    hello["stream"] = to_string(c.stream);
    c.queue->push_text(hello.dump());
    return id;
  }

  // The pilot role passes to the longest-connected remaining client.
  void disconnect(int id) {
    std::lock_guard lock(mu_);
    auto it = clients_.find(id);
    if (it == clients_.end()) return;
    it->second.queue->close();
    clients_.erase(it);
    if (pilot_ == id) {
      pilot_ = clients_.empty() ? 0 : clients_.begin()->first;
      if (pilot_) clients_.at(pilot_).queue->push_text(nlohmann::json{{"type", "role"}, {"role", "pilot"}}.dump());
    }
  }

  std::shared_ptr<ClientQueue> queue(int id) const {
    std::lock_guard lock(mu_);
    auto it = clients_.find(id);
    return it == clients_.end() ? nullptr : it->second.queue;
  }

  std::optional<Role> role(int id) const {
    std::lock_guard lock(mu_);
    if (!clients_.count(id)) return std::nullopt;
    return id == pilot_ ? Role::Pilot : Role::Observer;
  }

  std::size_t client_count() const {
    std::lock_guard lock(mu_);
    return clients_.size();
  }

  /// Handles one text frame; malformed input is answered with an error and the client stays connected.
  void on_text(int id, const std::string& text) {
    std::shared_ptr<ClientQueue> q = queue(id);
    if (!q) return;
    try {
      const ClientMessage m = parse_client_message(text);
      if (const auto* p = std::get_if<PoseMsg>(&m)) {
        if (role(id) != Role::Pilot) {
          q->push_text(error_message("pose ignored: client is an observer"));
          return;
        }
        if (!mailbox_) {
          q->push_text(error_message("pose ignored: server is not using a live pose source"));
          return;
        }
        mailbox_->post({0.0, p->pose, true});
      } else if (const auto* pm = std::get_if<ParamMsg>(&m)) {
        std::lock_guard lock(mu_);
        params_.push_back({id, *pm});
      } else if (const auto* s = std::get_if<SubscribeMsg>(&m)) {
        std::lock_guard lock(mu_);
        clients_.at(id).stream = s->stream;
      }
    } catch (const Error& e) {
      q->push_text(error_message(e.what()));
    }
  }

  void on_binary(int id, std::span<const std::uint8_t> bytes) {
    std::shared_ptr<ClientQueue> q = queue(id);
    if (!q) return;
    try {
      parse_header(bytes);
      q->push_text(error_message("clients may not send frames"));
    } catch (const Error& e) {
      q->push_text(error_message(std::string("rejected binary message: ") + e.what()));
    }
  }

  std::vector<PendingParam> take_params() {
    std::lock_guard lock(mu_);
    std::vector<PendingParam> out;
    out.swap(params_);
    return out;
  }

  bool wants(Stream s) const {
    std::lock_guard lock(mu_);
    for (const auto& [id, c] : clients_)
      if (c.stream == s) return true;
    return false;
  }

  void publish_frame(Stream s, const std::string& bytes) {
    std::lock_guard lock(mu_);
    for (auto& [id, c] : clients_)
      if (c.stream == s) c.queue->push_frame(bytes);
  }

  void broadcast_text(const std::string& text) {
    std::lock_guard lock(mu_);
    for (auto& [id, c] : clients_) c.queue->push_text(text);
  }

  void send_text(int id, const std::string& text) {
    if (auto q = queue(id)) q->push_text(text);
  }

  void close_all() {
    std::lock_guard lock(mu_);
    for (auto& [id, c] : clients_) c.queue->close();
  }

 private:
  struct Client {
    std::shared_ptr<ClientQueue> queue;
    Stream stream = Stream::SideBySide;
  };

  mutable std::mutex mu_;
  std::shared_ptr<hmd::LiveMailbox> mailbox_;
  std::size_t max_frames_;
  std::map<int, Client> clients_;
  std::vector<PendingParam> params_;
  nlohmann::json announcement_;
  int next_id_ = 0;
  int pilot_ = 0;
};

}  // namespace vrbridge::wire
