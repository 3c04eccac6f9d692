#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <thread>

#include "exo/session.hpp"
#include "exo/telemetry_server.hpp"

namespace exo::runtime {

std::vector<std::string> session_log_header() {
  std::vector<std::string> h{"t_ms", "mode", "seq"};
  for (const char* prefix : {"angle_", "vel_", "tau_"}) {
    for (const char* j : kJointNames) h.push_back(std::string(prefix) + j);
  }
  h.push_back("scale");
  h.push_back("missed_deadlines");
  return h;
}

namespace {

struct EventRow {
  std::int64_t t_ms;
  std::string event;
  std::string detail;
};

// Formats and writes rows on its own thread so the control loop never
// touches the file system.
class AsyncLog {
 public:
  AsyncLog(const std::filesystem::path& log_path, const std::filesystem::path& events_path) {
    if (!log_path.empty()) {
      log_.open(log_path, std::ios::trunc);
      if (!log_) throw IoError("cannot write " + log_path.string());
      const auto header = session_log_header();
      for (std::size_t i = 0; i < header.size(); ++i) log_ << (i ? "," : "") << header[i];
      log_ << '\n';
    }
    if (!events_path.empty()) {
      events_.open(events_path, std::ios::trunc);
      if (!events_) throw IoError("cannot write " + events_path.string());
      events_ << "t_ms,event,detail\n";
    }
    worker_ = std::thread([this] { loop(); });
  }

  ~AsyncLog() { close(); }

  void push(LogRow row) {
    {
      std::lock_guard lock(mu_);
      rows_.push_back(row);
    }
    cv_.notify_one();
  }

  void push(EventRow ev) {
    {
      std::lock_guard lock(mu_);
      events_q_.push_back(std::move(ev));
    }
    cv_.notify_one();
  }

  /// Flushes and joins; returns an error message when any write failed.
  std::string close() {
    {
      std::lock_guard lock(mu_);
      if (closed_) return error_;
      closed_ = true;
    }
    cv_.notify_one();
    if (worker_.joinable()) worker_.join();
    if (log_.is_open()) log_.flush();
    if (events_.is_open()) events_.flush();
    if ((log_.is_open() && !log_) || (events_.is_open() && !events_)) {
      if (error_.empty()) error_ = "session log write failed";
    }
    return error_;
  }

 private:
  void loop() {
    std::deque<LogRow> rows;
    std::deque<EventRow> events;
    std::string line;
    while (true) {
      bool done = false;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return closed_ || !rows_.empty() || !events_q_.empty(); });
        rows.swap(rows_);
        events.swap(events_q_);
        done = closed_;
      }
      for (const auto& r : rows) {
        if (!log_.is_open()) break;
        format(r, line);
        log_ << line;
      }
      for (const auto& e : events) {
        if (!events_.is_open()) break;
        events_ << e.t_ms << ',' << e.event << ',' << sanitize(e.detail) << '\n';
      }
      rows.clear();
      events.clear();
      if ((log_.is_open() && !log_) || (events_.is_open() && !events_)) {
        std::lock_guard lock(mu_);
        error_ = "session log write failed";
      }
      if (done) {
        std::lock_guard lock(mu_);
        if (rows_.empty() && events_q_.empty()) return;
      }
    }
  }

  static std::string sanitize(std::string s) {
    for (char& c : s) {
      if (c == ',' || c == '\n' || c == '\r') c = ';';
    }
    return s;
  }

  static void format(const LogRow& r, std::string& out) {
    out.clear();
    out += std::to_string(r.t_ms);
    out += ',';
    out += std::to_string(static_cast<int>(r.mode));
    out += ',';
    out += std::to_string(r.seq);
    for (const JointVector* v : {&r.angles, &r.velocities, &r.torque}) {
      for (double x : *v) {
        out += ',';
        out += csv::format_double(x);
      }
    }
    out += ',';
    out += csv::format_double(r.scale);
    out += ',';
    out += std::to_string(r.missed);
    out += '\n';
  }

  std::ofstream log_;
  std::ofstream events_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<LogRow> rows_;
  std::deque<EventRow> events_q_;
  bool closed_ = false;
  std::string error_;
  std::thread worker_;
};

float to_f32(double v) { return static_cast<float>(v); }

}  // namespace

struct Session::Impl {
  SessionConfig config;
  ecn::MlpParams psi;
  std::unique_ptr<SampleSource> source;
  std::mutex command_mu;
  std::deque<telemetry::CommandPacket> commands;
};

Session::Session(SessionConfig config, ecn::MlpParams psi, std::unique_ptr<SampleSource> source)
    : impl_(std::make_unique<Impl>()) {
  config.limits.validate();
  if (!(config.initial_scale >= 0.0 && config.initial_scale <= 1.0)) {
    throw ValidationError("scale", "must lie in [0, 1]");
  }
  if (!source) throw ValidationError("source", "missing sample source");
  psi.validate();
  if (psi.layers.front().weights.cols() != static_cast<Eigen::Index>(ecn::kInputDim) ||
      psi.layers.back().weights.rows() != static_cast<Eigen::Index>(ecn::kOutputDim)) {
    throw ValidationError("psi", "network must map 80 inputs to 4 outputs");
  }
  impl_->config = std::move(config);
  impl_->psi = std::move(psi);
  impl_->source = std::move(source);
}

Session::~Session() = default;

void Session::post_command(const telemetry::CommandPacket& cmd) {
  std::lock_guard lock(impl_->command_mu);
  if (impl_->commands.size() < 4096) impl_->commands.push_back(cmd);
}

SessionSummary Session::run() {
  using clock = std::chrono::steady_clock;
  const SessionConfig& cfg = impl_->config;
  AsyncLog log(cfg.log_path, cfg.events_path);
  SessionSummary summary;
  HistoryBuffer buffer;
  ControlMode mode = cfg.initial_mode;
  double scale = cfg.initial_scale;
  JointVector prev{};
  const bool replay = impl_->source->is_replay();

  const auto start = clock::now();
  auto prev_start = start;
  std::int64_t last_feed_ms = 0;
  bool feed_initialized = false;

  auto event = [&](std::int64_t t, std::string name, std::string detail) {
    log.push(EventRow{t, std::move(name), std::move(detail)});
  };
  auto apply = [&](std::int64_t t, Event ev, const std::string& cause) {
    const ControlMode next = transition(mode, ev);
    event(t, std::string(to_string(ev)), cause);
    if (next != mode) {
      event(t, "mode", std::string(to_string(mode)) + "->" + std::string(to_string(next)));
      mode = next;
    }
  };

  event(0, "session_start", std::string(replay ? "replay" : "live") + " mode=" + std::string(to_string(mode)));

  for (std::int64_t tick = 0; (cfg.max_ticks <= 0 || tick < cfg.max_ticks) && !stop_; ++tick) {
    std::int64_t clock_ms = 0;
    if (cfg.realtime) {
      std::this_thread::sleep_until(start + std::chrono::milliseconds(tick * kTickMs));
      const auto now = clock::now();
      if (tick > 0 && now - prev_start > std::chrono::milliseconds(kTickMs + kDeadlineToleranceMs)) {
        ++summary.missed_deadlines;
      }
      prev_start = now;
      clock_ms = std::chrono::duration_cast<std::chrono::milliseconds>(now - start).count();
    }

    const auto sample = impl_->source->next(prev);
    if (!sample) break;
    const std::int64_t t_ms = sample->t_ms;
    if (!cfg.realtime) clock_ms = t_ms;
    if (!feed_initialized) {
      last_feed_ms = clock_ms;
      feed_initialized = true;
    }

    std::deque<telemetry::CommandPacket> pending;
    {
      std::lock_guard lock(impl_->command_mu);
      pending.swap(impl_->commands);
    }
    for (const auto& cmd : pending) {
      ++summary.commands;
      last_feed_ms = clock_ms;
      switch (cmd.cmd) {
        case telemetry::CommandType::Heartbeat:
          break;
        case telemetry::CommandType::SetMode:
          apply(t_ms, cmd.arg == 1.0f ? Event::CmdAssist : Event::CmdZero, "command");
          break;
        case telemetry::CommandType::SetScale:
          scale = std::clamp(static_cast<double>(cmd.arg), 0.0, 1.0);
          event(t_ms, "scale", csv::format_double(scale));
          break;
        case telemetry::CommandType::EStop:
          apply(t_ms, Event::CmdEstop, "command");
          break;
        case telemetry::CommandType::Reset:
          apply(t_ms, Event::CmdReset, "command");
          break;
        case telemetry::CommandType::Tag:
          event(t_ms, "tag", cmd.tag);
          break;
      }
    }
    if (cfg.watchdog && !replay && mode == ControlMode::Assist &&
        clock_ms - last_feed_ms > cfg.limits.watchdog_timeout_ms) {
      apply(t_ms, Event::WatchdogExpired, "no command for " + std::to_string(clock_ms - last_feed_ms) + " ms");
    }
    if (sample->mode && *sample->mode != mode) {
      event(t_ms, "mode", std::string(to_string(mode)) + "->" + std::string(to_string(*sample->mode)) + " (replayed)");
      mode = *sample->mode;
    }
    if (sample->scale) scale = *sample->scale;

    JointVector angles = sample->angles;
    if (!replay) {
      for (std::size_t j = 0; j < kJointCount; ++j) angles[j] += cfg.angle_offsets[j];
    }
    if (!buffer.ingest(angles, t_ms)) {
      event(t_ms, "rejected_sample", "timestamp " + std::to_string(t_ms) + " not increasing");
    }

    ControlOutput out = control_step(buffer, mode, scale, impl_->psi, cfg.limits, prev);
    if (out.fault) {
      ++summary.faults;
      apply(t_ms, Event::Fault, "non-finite torque command");
      out.command = {};
    }

    LogRow row;
    row.t_ms = t_ms;
    row.mode = mode;
    row.seq = static_cast<std::uint32_t>(tick);
    row.angles = angles;
    if (const auto v = buffer.latest_velocity(); v && buffer.latest_time() == t_ms) row.velocities = *v;
    row.torque = out.command;
    row.scale = scale;
    row.missed = summary.missed_deadlines;
    log.push(row);

    for (std::size_t j = 0; j < kJointCount; ++j) {
      summary.max_abs_torque = std::max(summary.max_abs_torque, std::abs(out.command[j]));
      summary.max_torque_step = std::max(summary.max_torque_step, std::abs(out.command[j] - prev[j]));
    }

    if (server_ != nullptr) {
      telemetry::StatePacket p;
      p.mode = static_cast<std::uint8_t>(mode);
      p.flags = static_cast<std::uint8_t>((out.not_ready ? telemetry::kFlagNotReady : 0) |
                                          (out.fault ? telemetry::kFlagFault : 0));
      p.seq = row.seq;
      p.t_ms = static_cast<std::uint64_t>(std::max<std::int64_t>(t_ms, 0));
      for (std::size_t j = 0; j < kJointCount; ++j) {
        p.angles[j] = to_f32(row.angles[j]);
        p.velocities[j] = to_f32(row.velocities[j]);
        p.torque_cmd[j] = to_f32(row.torque[j]);
      }
      p.scale = to_f32(scale);
      p.missed_deadlines = summary.missed_deadlines;
      server_->publish(p);
    }
    prev = out.command;
    summary.ticks = tick + 1;
  }

  summary.final_mode = mode;
  summary.rejected_samples = buffer.rejected();
  event(summary.ticks * kTickMs, "session_end",
        "ticks=" + std::to_string(summary.ticks) + " missed=" + std::to_string(summary.missed_deadlines));
  const std::string err = log.close();
  if (!err.empty()) throw IoError(err);
  return summary;
}

}  // namespace exo::runtime
