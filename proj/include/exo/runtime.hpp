#pragma once

// Building blocks of the 100 Hz deployment loop: velocity estimation,
// safety limiting, the mode state machine and the per-tick control law.

#include <cstdint>
#include <deque>
#include <optional>
#include <string_view>
#include <vector>

#include "exo/common.hpp"
#include "exo/ecn.hpp"

namespace exo::runtime {

enum class ControlMode : std::uint8_t { ZeroTorque = 0, Assist = 1, EStop = 2 };

enum class Event { CmdZero, CmdAssist, CmdEstop, CmdReset, WatchdogExpired, Fault };

std::string_view to_string(ControlMode mode);
std::string_view to_string(Event event);
std::optional<ControlMode> parse_mode(std::string_view text);

/// Total mode transition function. Unlisted (mode, event) pairs keep the mode.
ControlMode transition(ControlMode mode, Event event);

struct SafetyLimits {
  double tau_max = 10.0;               // N m per joint
  double rate_limit = 2.0;             // N m per tick
  std::int64_t watchdog_timeout_ms = 500;

  void validate() const;
};

/// Second-order Butterworth low-pass (bilinear transform).
class LowPass2 {
 public:
  LowPass2(double cutoff_hz, double sample_hz);
  double filter(double x);
  void reset(double steady_value);
  bool primed() const noexcept { return primed_; }

 private:
  double b0_, b1_, b2_, a1_, a2_;
  double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
  bool primed_ = false;
};

/// Timestamped angle ring with central-difference velocities,
/// v[k] = (theta[k] - theta[k-2]) / (t[k] - t[k-2]), low-passed at 6 Hz.
class HistoryBuffer {
 public:
  static constexpr std::size_t kCapacity = ecn::kHistory + 6;

  explicit HistoryBuffer(double cutoff_hz = 6.0, double sample_hz = 100.0);

  /// Returns false (and counts the sample) when t_ms does not increase.
  bool ingest(const JointVector& angles, std::int64_t t_ms);

  std::size_t rejected() const noexcept { return rejected_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  /// Samples whose velocity is available, oldest first (at most kHistory).
  std::vector<ecn::JointSample> network_history() const;

  /// Latest angles and velocity (nullopt while unavailable).
  const JointVector& latest_angles() const;
  std::optional<JointVector> latest_velocity() const;
  std::int64_t latest_time() const;

 private:
  struct Entry {
    std::int64_t t_ms;
    JointVector angles;
    std::optional<JointVector> velocity;
  };
  std::deque<Entry> entries_;
  std::vector<LowPass2> filters_;
  std::size_t rejected_ = 0;
};

struct SafetyOutput {
  JointVector command{};
  bool fault = false;  // a non-finite channel was zeroed
  bool clamped = false;
  bool rate_limited = false;
};

/// Clamp to +-tau_max, then limit the per-tick change from `previous`.
SafetyOutput apply_safety(const JointVector& command, const SafetyLimits& limits,
                          const JointVector& previous);

struct ControlOutput {
  JointVector command{};
  bool not_ready = false;
  bool fault = false;
};

/// One 100 Hz tick of the deployed controller.
ControlOutput control_step(const HistoryBuffer& buffer, ControlMode mode, double scale,
                           const ecn::MlpParams& psi, const SafetyLimits& limits,
                           const JointVector& previous);

}  // namespace exo::runtime
