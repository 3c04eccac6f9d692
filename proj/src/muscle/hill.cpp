#include <algorithm>
#include <cmath>

#include "exo/muscle.hpp"

namespace exo::muscle {

namespace {

constexpr double kLengthWidth = 0.45;
constexpr double kHillShape = 4.0;
constexpr double kPassiveStrain = 0.6;
constexpr double kEccentricPlateau = 1.5;

// Hip coordinates are flexion while its convention torque is extension.
double coordinate_sign(Coord joint) { return joint == dynamics::kHip ? -1.0 : 1.0; }

}  // namespace

double MuscleParams::moment_arm(Coord joint) const {
  double total = 0.0;
  for (const auto& a : arms) {
    if (a.joint == joint) total += a.arm;
  }
  return total;
}

void MuscleParams::validate() const {
  if (!(max_isometric_force > 0.0)) throw ValidationError(name + ".F0", "must be positive");
  if (!(optimal_fiber_length > 0.0)) throw ValidationError(name + ".l0", "must be positive");
  if (!(max_shortening_velocity > 0.0)) throw ValidationError(name + ".v_max", "must be positive");
  const bool any = std::any_of(arms.begin(), arms.end(), [](const MomentArm& a) { return a.arm != 0.0; });
  if (!any) throw ValidationError(name + ".moment_arm", "needs at least one nonzero arm");
}

double active_force_length(double l_norm) {
  const double d = l_norm - 1.0;
  return std::exp(-d * d / kLengthWidth);
}

double force_velocity(double v_norm) {
  if (v_norm <= 0.0) {
    return std::max(0.0, (1.0 + v_norm) / (1.0 - kHillShape * v_norm));
  }
  return 1.0 + (kEccentricPlateau - 1.0) * v_norm / (v_norm + 1.0 / 3.0);
}

double passive_force_length(double l_norm) {
  if (l_norm <= 1.0) return 0.0;
  return (std::exp(kHillShape * (l_norm - 1.0) / kPassiveStrain) - 1.0) /
         (std::exp(kHillShape) - 1.0);
}

double muscle_force(const MuscleParams& p, const MuscleState& s) {
  const double l_norm = s.length / p.optimal_fiber_length;
  const double v_norm = s.velocity / p.max_shortening_velocity;
  return p.max_isometric_force * (s.activation * active_force_length(l_norm) * force_velocity(v_norm) +
                                  passive_force_length(l_norm));
}

FiberKinematics fiber_kinematics(const MuscleParams& p, const Triple& q, const Triple& qdot) {
  FiberKinematics k{p.optimal_fiber_length, 0.0};
  for (const auto& a : p.arms) {
    // A muscle shortens when its joint moves the way it pulls.
    const double coord_arm = coordinate_sign(a.joint) * a.arm;
    k.length -= coord_arm * (q[a.joint] - a.ref_angle);
    k.velocity -= coord_arm * qdot[a.joint];
  }
  return k;
}

double effort_metric(const std::vector<std::vector<double>>& activations, double dt) {
  if (activations.size() < 2) return 0.0;
  auto sum_sq = [](const std::vector<double>& row) {
    double s = 0.0;
    for (double a : row) s += a * a;
    return s;
  };
  double total = 0.0;
  double prev = sum_sq(activations.front());
  for (std::size_t i = 1; i < activations.size(); ++i) {
    const double cur = sum_sq(activations[i]);
    total += 0.5 * (prev + cur) * dt;
    prev = cur;
  }
  return total;
}

}  // namespace exo::muscle
