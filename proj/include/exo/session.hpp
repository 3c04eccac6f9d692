#pragma once

// The 100 Hz session loop: sample source, control law, mode machine,
// watchdog, deadline accounting, buffered CSV logging and telemetry.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "exo/cpn.hpp"
#include "exo/csv.hpp"
#include "exo/runtime.hpp"
#include "exo/telemetry.hpp"

namespace exo::telemetry {
class TelemetryServer;
}

namespace exo::runtime {

inline constexpr std::int64_t kTickMs = 10;
inline constexpr std::int64_t kDeadlineToleranceMs = 2;

struct SourceSample {
  std::int64_t t_ms = 0;
  JointVector angles{};
  std::optional<ControlMode> mode;  // forced by a replayed session log
  std::optional<double> scale;
};

class SampleSource {
 public:
  virtual ~SampleSource() = default;
  /// Next sample, given the command applied over the previous tick.
  /// nullopt when the source is exhausted.
  virtual std::optional<SourceSample> next(const JointVector& applied) = 0;
  virtual bool is_replay() const { return false; }
};

/// In-process plant driven by the tracking human, standing in for IMUs.
class SimulatedSubject : public SampleSource {
 public:
  SimulatedSubject(dynamics::Plant plant, cpn::PdGains gains, dynamics::SquatReference ref,
                   double angle_sigma = 0.0, std::uint64_t seed = 0);
  std::optional<SourceSample> next(const JointVector& applied) override;
  const dynamics::PlantState& state() const noexcept { return state_; }

 private:
  dynamics::Plant plant_;
  cpn::PdGains gains_;
  dynamics::SquatReference ref_;
  dynamics::PlantState state_;
  double sigma_;
  std::mt19937_64 rng_;
  std::int64_t tick_ = 0;
};

/// Angle file or session log replay. Requires t_ms and angle_<joint>
/// columns; mode and scale columns, when present, are forced per row.
class ReplaySource : public SampleSource {
 public:
  explicit ReplaySource(const std::filesystem::path& path);
  std::optional<SourceSample> next(const JointVector& applied) override;
  bool is_replay() const override { return true; }
  std::size_t size() const noexcept { return samples_.size(); }

 private:
  std::vector<SourceSample> samples_;
  std::size_t cursor_ = 0;
};

struct SessionConfig {
  SafetyLimits limits;
  ControlMode initial_mode = ControlMode::ZeroTorque;
  double initial_scale = 1.0;
  std::int64_t max_ticks = 18000;  // <= 0 runs until the source ends or stop()
  bool realtime = true;
  bool watchdog = false;
  JointVector angle_offsets{};  // rad, added to live samples
  std::filesystem::path log_path;
  std::filesystem::path events_path;
};

struct SessionSummary {
  std::int64_t ticks = 0;
  std::uint32_t missed_deadlines = 0;
  ControlMode final_mode = ControlMode::ZeroTorque;
  std::uint64_t faults = 0;
  std::uint64_t commands = 0;
  std::size_t rejected_samples = 0;
  double max_abs_torque = 0.0;
  double max_torque_step = 0.0;
};

/// One row of the session log.
struct LogRow {
  std::int64_t t_ms = 0;
  ControlMode mode = ControlMode::ZeroTorque;
  std::uint32_t seq = 0;
  JointVector angles{};
  JointVector velocities{};
  JointVector torque{};
  double scale = 0.0;
  std::uint32_t missed = 0;
};

std::vector<std::string> session_log_header();

class Session {
 public:
  Session(SessionConfig config, ecn::MlpParams psi, std::unique_ptr<SampleSource> source);
  ~Session();

  /// Optional; the server's commands are delivered through post_command.
  void attach_telemetry(telemetry::TelemetryServer* server) { server_ = server; }

  /// Thread-safe; applied at the next tick boundary.
  void post_command(const telemetry::CommandPacket& cmd);
  void request_stop() { stop_ = true; }

  /// Runs to completion. I/O failures raise IoError after the log written
  /// so far is flushed.
  SessionSummary run();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  telemetry::TelemetryServer* server_ = nullptr;
  std::atomic<bool> stop_{false};
};

}  // namespace exo::runtime
