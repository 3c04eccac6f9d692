#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "httplib.h"

#include "exo/telemetry_server.hpp"

namespace exo::telemetry {

void LineFeed::push(std::string line) {
  {
    std::lock_guard lock(mu_);
    lines_.push_back(std::move(line));
    while (lines_.size() > capacity_) {
      lines_.pop_front();
      ++first_;
    }
  }
  cv_.notify_all();
}

std::uint64_t LineFeed::read(std::uint64_t from, std::vector<std::string>& out, int wait_ms) {
  std::unique_lock lock(mu_);
  const auto end = [&] { return first_ + lines_.size(); };
  if (from >= end() && !closed_) {
    cv_.wait_for(lock, std::chrono::milliseconds(wait_ms), [&] { return from < end() || closed_; });
  }
  from = std::max(from, first_);
  for (std::uint64_t i = from; i < end(); ++i) out.push_back(lines_[i - first_]);
  return end();
}

std::uint64_t LineFeed::next_index() const {
  std::lock_guard lock(mu_);
  return first_ + lines_.size();
}

void LineFeed::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool LineFeed::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

struct TelemetryServer::Bridge {
  httplib::Server http;
};

namespace {

std::uint32_t resolve_ipv4(const std::string& host, const std::string& what) {
  in_addr addr{};
  const std::string h = host == "localhost" ? "127.0.0.1" : host;
  if (inet_pton(AF_INET, h.c_str(), &addr) != 1) {
    throw ValidationError(what, "not an IPv4 address: " + host);
  }
  return addr.s_addr;
}

std::uint16_t bound_port(int fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  return ntohs(addr.sin_port);
}

}  // namespace

TelemetryServer::TelemetryServer(ServerConfig config, CommandSink sink)
    : config_(std::move(config)), sink_(std::move(sink)) {
  if (config_.stream_decimation < 1) throw ValidationError("stream_decimation", "must be >= 1");
  for (const auto& t : config_.stream_targets) {
    const auto colon = t.rfind(':');
    if (colon == std::string::npos) throw ValidationError("stream_targets", "expected host:port, got " + t);
    const int port = std::stoi(t.substr(colon + 1));
    if (port <= 0 || port > 65535) throw ValidationError("stream_targets", "bad port in " + t);
    targets_.push_back({resolve_ipv4(t.substr(0, colon), "stream_targets"), static_cast<std::uint16_t>(port)});
  }
}

TelemetryServer::~TelemetryServer() { stop(); }

void TelemetryServer::start() {
  if (running_) return;
  command_fd_ = socket(AF_INET, SOCK_DGRAM, 0);
  stream_fd_ = socket(AF_INET, SOCK_DGRAM, 0);
  if (command_fd_ < 0 || stream_fd_ < 0) throw IoError(std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(config_.command_port);
  addr.sin_addr.s_addr = resolve_ipv4(config_.bind_address, "bind_address");
  if (bind(command_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string err = std::strerror(errno);
    close(command_fd_);
    close(stream_fd_);
    command_fd_ = stream_fd_ = -1;
    throw IoError("cannot bind UDP command port " + std::to_string(config_.command_port) + ": " + err);
  }
  command_port_ = bound_port(command_fd_);
  timeval tv{0, 50000};
  setsockopt(command_fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));

  if (config_.bridge_enabled) {
    bridge_ = std::make_unique<Bridge>();
    auto& http = bridge_->http;
    http.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    http.set_socket_options([](int sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    http.Get("/state", [this](const httplib::Request&, httplib::Response& res) {
      std::lock_guard lock(stream_mu_);
      if (!latest_) {
        res.status = 503;
        res.set_content(R"({"error":"no state yet"})", "application/json");
        return;
      }
      res.set_content(to_json(*latest_).dump(), "application/json");
    });
    http.Post("/command", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const CommandPacket cmd = command_from_json(nlohmann::json::parse(req.body));
        inject(cmd);
        res.set_content(R"({"ok":true})", "application/json");
      } catch (const std::exception& e) {
        ++malformed_;
        res.status = 400;
        res.set_content(nlohmann::json{{"ok", false}, {"error", e.what()}}.dump(), "application/json");
      }
    });
    http.Options("/command", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "POST, GET, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
    });
    http.Get("/stream", [this](const httplib::Request&, httplib::Response& res) {
      auto cursor = std::make_shared<std::uint64_t>(feed_.next_index());
      res.set_chunked_content_provider(
          "application/x-ndjson", [this, cursor](std::size_t, httplib::DataSink& sink) {
            if (feed_.closed() || !running_) {
              sink.done();
              return true;
            }
            std::vector<std::string> lines;
            *cursor = feed_.read(*cursor, lines, 100);
            for (const auto& l : lines) {
              if (!sink.write(l.data(), l.size())) return false;
            }
            return true;
          });
    });
    int port = config_.bridge_port;
    if (port == 0) {
      port = http.bind_to_any_port(config_.bind_address);
      if (port <= 0) throw IoError("cannot bind bridge port 0");
    } else if (!http.bind_to_port(config_.bind_address, port)) {
      close(command_fd_);
      close(stream_fd_);
      command_fd_ = stream_fd_ = -1;
      throw IoError("cannot bind bridge port " + std::to_string(port));
    }
    bridge_port_ = static_cast<std::uint16_t>(port);
  }

  running_ = true;
  command_thread_ = std::thread([this] { command_loop(); });
  stream_thread_ = std::thread([this] { stream_loop(); });
  if (bridge_) {
    bridge_thread_ = std::thread([this] { bridge_->http.listen_after_bind(); });
    bridge_->http.wait_until_ready();
  }
}

void TelemetryServer::stop() {
  if (!running_.exchange(false)) return;
  feed_.close();
  stream_cv_.notify_all();
  if (bridge_) bridge_->http.stop();
  if (command_thread_.joinable()) command_thread_.join();
  if (stream_thread_.joinable()) stream_thread_.join();
  if (bridge_thread_.joinable()) bridge_thread_.join();
  if (command_fd_ >= 0) close(command_fd_);
  if (stream_fd_ >= 0) close(stream_fd_);
  command_fd_ = stream_fd_ = -1;
}

void TelemetryServer::inject(const CommandPacket& cmd) {
  ++commands_;
  if (sink_) sink_(cmd);
  if (cmd.cmd != CommandType::Heartbeat) feed_.push(to_json(cmd).dump() + "\n");
}

void TelemetryServer::add_peer(std::uint32_t addr_be) {
  std::lock_guard lock(stream_mu_);
  const Target t{addr_be, config_.stream_port};
  if (std::find(targets_.begin(), targets_.end(), t) == targets_.end()) targets_.push_back(t);
}

void TelemetryServer::command_loop() {
  std::array<std::uint8_t, 2048> buf{};
  while (running_) {
    sockaddr_in peer{};
    socklen_t len = sizeof(peer);
    const ssize_t n = recvfrom(command_fd_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&peer), &len);
    if (n < 0) continue;  // timeout or interrupted
    const auto bytes = std::span<const std::uint8_t>(buf.data(), static_cast<std::size_t>(n));
    const auto decoded = decode_command(bytes);
    if (!decoded.ok() || bytes.size() != kCommandPacketSize) {
      ++malformed_;
      continue;
    }
    add_peer(peer.sin_addr.s_addr);
    inject(*decoded.value);
  }
}

void TelemetryServer::publish(const StatePacket& state) {
  bool stream = false;
  {
    std::lock_guard lock(stream_mu_);
    latest_ = state;
    stream = publish_count_++ % static_cast<std::uint64_t>(config_.stream_decimation) == 0;
    if (stream) pending_ = state;
  }
  if (stream) stream_cv_.notify_one();
}

void TelemetryServer::stream_loop() {
  while (running_) {
    StatePacket packet;
    std::vector<Target> targets;
    {
      std::unique_lock lock(stream_mu_);
      stream_cv_.wait_for(lock, std::chrono::milliseconds(100), [&] { return pending_.has_value() || !running_; });
      if (!pending_) continue;
      packet = *pending_;
      pending_.reset();
      targets = targets_;
    }
    feed_.push(to_json(packet).dump() + "\n");
    const auto bytes = encode_state(packet);
    for (const auto& t : targets) {
      sockaddr_in addr{};
      addr.sin_family = AF_INET;
      addr.sin_port = htons(t.port);
      addr.sin_addr.s_addr = t.addr_be;
      if (sendto(stream_fd_, bytes.data(), bytes.size(), 0, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) ==
          static_cast<ssize_t>(bytes.size())) {
        ++states_sent_;
      }
    }
  }
}

ServerStats TelemetryServer::stats() const {
  return {commands_.load(), malformed_.load(), states_sent_.load(), feed_.next_index()};
}

}  // namespace exo::telemetry
