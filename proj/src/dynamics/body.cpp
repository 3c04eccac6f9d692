#include <cmath>
#include <string>

#include "exo/dynamics.hpp"

namespace exo::dynamics {

namespace {

void check_segment(const Segment& s, const std::string& name) {
  if (!(s.length > 0.0) || !std::isfinite(s.length)) {
    throw ValidationError(name + ".length", "must be positive");
  }
  if (!(s.mass > 0.0) || !std::isfinite(s.mass)) {
    throw ValidationError(name + ".mass", "must be positive");
  }
  if (!(s.inertia > 0.0) || !std::isfinite(s.inertia)) {
    throw ValidationError(name + ".inertia", "must be positive");
  }
  if (!std::isfinite(s.com_offset)) {
    throw ValidationError(name + ".com_offset", "must be finite");
  }
}

}  // namespace

void BodyParams::validate() const {
  if (!(total_mass > 0.0)) throw ValidationError("total_mass", "must be positive");
  if (!(height > 0.0)) throw ValidationError("height", "must be positive");
  check_segment(shank, "shank");
  check_segment(thigh, "thigh");
  check_segment(hat, "hat");
  if (shank.mass + thigh.mass + hat.mass > total_mass * (1.0 + 1e-12)) {
    throw ValidationError("segment mass", "sum exceeds total_mass");
  }
  if (!std::isfinite(gravity)) throw ValidationError("gravity", "must be finite");
}

BodyParams anthropometric_scale(double height, double mass,
                                const AnthropometricFractions& f) {
  if (!(height >= 1.0 && height <= 2.2)) {
    throw ValidationError("height", "must lie in [1.0, 2.2] m");
  }
  if (!(mass >= 30.0 && mass <= 200.0)) {
    throw ValidationError("mass", "must lie in [30, 200] kg");
  }
  auto make = [&](double mass_fraction, double length_fraction) {
    Segment s;
    s.mass = mass_fraction * mass;
    s.length = length_fraction * height;
    s.com_offset = f.com_fraction * s.length;
    const double gyration = f.gyration_fraction * s.length;
    s.inertia = s.mass * gyration * gyration;
    return s;
  };
  BodyParams body;
  body.total_mass = mass;
  body.height = height;
  body.shank = make(f.shank_mass, f.shank_length);
  body.thigh = make(f.thigh_mass, f.thigh_length);
  body.hat = make(f.hat_mass, f.hat_length);
  body.validate();
  return body;
}

}  // namespace exo::dynamics
