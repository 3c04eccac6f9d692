#include <algorithm>
#include <cmath>

#include "exo/runtime.hpp"

namespace exo::runtime {

std::string_view to_string(ControlMode mode) {
  switch (mode) {
    case ControlMode::ZeroTorque: return "ZeroTorque";
    case ControlMode::Assist: return "Assist";
    case ControlMode::EStop: return "EStop";
  }
  return "?";
}

std::string_view to_string(Event event) {
  switch (event) {
    case Event::CmdZero: return "cmd_zero";
    case Event::CmdAssist: return "cmd_assist";
    case Event::CmdEstop: return "cmd_estop";
    case Event::CmdReset: return "cmd_reset";
    case Event::WatchdogExpired: return "watchdog_expired";
    case Event::Fault: return "fault";
  }
  return "?";
}

std::optional<ControlMode> parse_mode(std::string_view text) {
  if (text == "zero" || text == "ZeroTorque" || text == "0") return ControlMode::ZeroTorque;
  if (text == "assist" || text == "Assist" || text == "1") return ControlMode::Assist;
  if (text == "estop" || text == "EStop" || text == "2") return ControlMode::EStop;
  return std::nullopt;
}

ControlMode transition(ControlMode mode, Event event) {
  if (event == Event::CmdEstop || event == Event::Fault) return ControlMode::EStop;
  switch (mode) {
    case ControlMode::EStop:
      return event == Event::CmdReset ? ControlMode::ZeroTorque : ControlMode::EStop;
    case ControlMode::Assist:
      if (event == Event::CmdZero || event == Event::WatchdogExpired) return ControlMode::ZeroTorque;
      return ControlMode::Assist;
    case ControlMode::ZeroTorque:
      return event == Event::CmdAssist ? ControlMode::Assist : ControlMode::ZeroTorque;
  }
  return mode;
}

void SafetyLimits::validate() const {
  if (!(tau_max > 0.0 && tau_max <= 25.0)) throw ValidationError("tau_max", "must lie in (0, 25] N m");
  if (!(rate_limit > 0.0)) throw ValidationError("rate_limit", "must be positive");
  if (watchdog_timeout_ms <= 0) throw ValidationError("watchdog_timeout", "must be positive");
}

SafetyOutput apply_safety(const JointVector& command, const SafetyLimits& limits,
                          const JointVector& previous) {
  SafetyOutput out;
  for (std::size_t j = 0; j < kJointCount; ++j) {
    double c = command[j];
    if (!std::isfinite(c)) {
      c = 0.0;
      out.fault = true;
    }
    const double clamped = std::clamp(c, -limits.tau_max, limits.tau_max);
    out.clamped |= clamped != c;
    const double prev = std::isfinite(previous[j]) ? previous[j] : 0.0;
    const double limited = std::clamp(clamped, prev - limits.rate_limit, prev + limits.rate_limit);
    out.rate_limited |= limited != clamped;
    out.command[j] = limited;
  }
  return out;
}

ControlOutput control_step(const HistoryBuffer& buffer, ControlMode mode, double scale,
                           const ecn::MlpParams& psi, const SafetyLimits& limits,
                           const JointVector& previous) {
  ControlOutput out;
  if (mode != ControlMode::Assist) return out;
  const auto history = buffer.network_history();
  const auto state = ecn::build_state(history);
  if (!state) {
    out.not_ready = true;
    return out;
  }
  const ecn::Action action = ecn::forward(psi, *state);
  const double gain = std::clamp(scale, 0.0, 1.0) * limits.tau_max;
  JointVector raw{};
  for (std::size_t j = 0; j < kJointCount; ++j) raw[j] = gain * action[static_cast<Eigen::Index>(j)];
  const SafetyOutput safe = apply_safety(raw, limits, previous);
  out.command = safe.command;
  out.fault = safe.fault;
  return out;
}

}  // namespace exo::runtime
