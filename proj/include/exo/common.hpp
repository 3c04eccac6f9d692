#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace exo {

// Per-leg sagittal channels as carried by the device, network input and wire.
enum JointIndex : std::size_t { kHipL = 0, kHipR = 1, kKneeL = 2, kKneeR = 3 };

inline constexpr std::size_t kJointCount = 4;

/// Angles, velocities or torques for {hipL, hipR, kneeL, kneeR}.
using JointVector = std::array<double, kJointCount>;

inline constexpr const char* kJointNames[kJointCount] = {"hipL", "hipR", "kneeL", "kneeR"};

/// Bad input value. `field()` names the offending parameter.
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Malformed file or record. `field()` names the part that failed to parse.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace exo
