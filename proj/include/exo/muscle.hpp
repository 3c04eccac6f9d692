#pragma once

// Hill-type muscle-tendon force model over a lumped sagittal muscle set,
// with a static-optimization activation solver used as an effort proxy.
//
//   F(l, ldot, a) = F0 [ a fL(l/l0) fV(ldot/vmax) + fP(l/l0) ]
//
// Moment arms are signed in the torque reporting convention (hip extension
// positive, knee flexion positive, ankle dorsiflexion positive), constant
// over the range of motion.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "exo/dynamics.hpp"

namespace exo::muscle {

using dynamics::Coord;
using dynamics::Triple;

struct MomentArm {
  Coord joint = dynamics::kHip;
  double arm = 0.0;        // m, convention-signed
  double ref_angle = 0.0;  // rad, joint angle at which the fiber sits at l0
};

struct MuscleParams {
  std::string name;
  double max_isometric_force = 0.0;      // F0, N
  double optimal_fiber_length = 0.0;     // l0, m
  double max_shortening_velocity = 0.0;  // vmax, m/s
  std::vector<MomentArm> arms;

  double moment_arm(Coord joint) const;
  void validate() const;
};

struct MuscleState {
  double length = 0.0;    // m
  double velocity = 0.0;  // m/s, lengthening positive
  double activation = 0.0;
};

/// exp(-(l - 1)^2 / 0.45)
double active_force_length(double l_norm);
/// Hill hyperbola when shortening, eccentric plateau 1.5 when lengthening.
double force_velocity(double v_norm);
/// Exponential passive curve, 0 at or below slack, 1 at 1.6 l0.
double passive_force_length(double l_norm);

double muscle_force(const MuscleParams& p, const MuscleState& s);

struct FiberKinematics {
  double length = 0.0;
  double velocity = 0.0;
};

/// Fiber length and lengthening velocity from joint angles, constant arms.
FiberKinematics fiber_kinematics(const MuscleParams& p, const Triple& q, const Triple& qdot);

/// gluteals, iliopsoas, vasti, hamstrings, rectus femoris, gastrocnemius.
/// F0 sized so extensor capacity is three times the given peak extension
/// torques (lumped, N m). Fibers are at l0 at `ref_pose`.
std::vector<MuscleParams> default_muscle_set(double peak_hip_extension,
                                             double peak_knee_extension,
                                             const Triple& ref_pose);

nlohmann::json muscle_set_to_json(std::span<const MuscleParams> muscles);
std::vector<MuscleParams> muscle_set_from_json(const nlohmann::json& j);
std::vector<MuscleParams> load_muscle_set(const std::filesystem::path& path);

struct TorquePair {
  double hip = 0.0;   // extension positive
  double knee = 0.0;  // flexion positive
};

struct StaticOptimizationResult {
  std::vector<double> activations;
  TorquePair residual;  // required minus produced
  bool feasible = true;
  double kkt_residual = 0.0;
  int iterations = 0;
};

/// min sum a_i^2  s.t.  muscles reproduce `required` at hip and knee,
/// 0 <= a_i <= 1. When the torque is out of reach the closest achievable
/// activations are returned with `feasible == false` and the residual.
StaticOptimizationResult static_optimization(TorquePair required,
                                             std::span<const MuscleParams> muscles,
                                             std::span<const FiberKinematics> fibers);

/// Trapezoidal integral of sum_i a_i(t)^2 over uniformly sampled rows.
double effort_metric(const std::vector<std::vector<double>>& activations, double dt);

}  // namespace exo::muscle
