#pragma once

// UDP command intake, decimated UDP state stream and the HTTP/NDJSON bridge
// for the browser console. All network I/O runs on its own threads; the
// control loop only calls publish() and receives commands through the
// callback it registers.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "exo/telemetry.hpp"

namespace exo::telemetry {

struct ServerConfig {
  std::string bind_address = "127.0.0.1";
  std::uint16_t command_port = 45001;  // 0 picks a free port
  std::uint16_t stream_port = 45002;   // port command peers listen on
  bool bridge_enabled = true;
  std::uint16_t bridge_port = 45080;   // 0 picks a free port
  int stream_decimation = 2;           // control ticks per streamed packet
  std::vector<std::string> stream_targets;  // extra "host:port" receivers
};

struct ServerStats {
  std::uint64_t commands = 0;
  std::uint64_t malformed = 0;
  std::uint64_t states_sent = 0;
  std::uint64_t bridge_lines = 0;
};

/// Sequenced NDJSON lines shared by every bridge client.
class LineFeed {
 public:
  explicit LineFeed(std::size_t capacity = 4096) : capacity_(capacity) {}
  void push(std::string line);
  /// Lines with index >= `from`, waiting up to `wait_ms` when none are new.
  /// Returns the next index to ask for.
  std::uint64_t read(std::uint64_t from, std::vector<std::string>& out, int wait_ms);
  std::uint64_t next_index() const;
  void close();
  bool closed() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::string> lines_;
  std::uint64_t first_ = 0;
  std::size_t capacity_;
  bool closed_ = false;
};

class TelemetryServer {
 public:
  using CommandSink = std::function<void(const CommandPacket&)>;

  TelemetryServer(ServerConfig config, CommandSink sink);
  ~TelemetryServer();
  TelemetryServer(const TelemetryServer&) = delete;
  TelemetryServer& operator=(const TelemetryServer&) = delete;

  /// Binds every socket; throws IoError naming the port that failed.
  void start();
  void stop();

  /// Called once per control tick with the tick's snapshot.
  void publish(const StatePacket& state);

  /// Feeds a command through the same path as a received datagram.
  void inject(const CommandPacket& cmd);

  std::uint16_t command_port() const noexcept { return command_port_; }
  std::uint16_t bridge_port() const noexcept { return bridge_port_; }
  ServerStats stats() const;

 private:
  void command_loop();
  void stream_loop();
  void add_peer(std::uint32_t addr_be);

  ServerConfig config_;
  CommandSink sink_;
  int command_fd_ = -1;
  int stream_fd_ = -1;
  std::uint16_t command_port_ = 0;
  std::uint16_t bridge_port_ = 0;
  std::atomic<bool> running_{false};
  std::thread command_thread_;
  std::thread stream_thread_;
  std::thread bridge_thread_;

  std::mutex stream_mu_;
  std::condition_variable stream_cv_;
  std::optional<StatePacket> pending_;
  std::optional<StatePacket> latest_;
  std::uint64_t publish_count_ = 0;
  struct Target {
    std::uint32_t addr_be;
    std::uint16_t port;
    bool operator==(const Target&) const = default;
  };
  std::vector<Target> targets_;

  LineFeed feed_;
  struct Bridge;
  std::unique_ptr<Bridge> bridge_;

  std::atomic<std::uint64_t> commands_{0};
  std::atomic<std::uint64_t> malformed_{0};
  std::atomic<std::uint64_t> states_sent_{0};
};

}  // namespace exo::telemetry
