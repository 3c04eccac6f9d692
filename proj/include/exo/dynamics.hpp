#pragma once

// Reduced sagittal squat plant: a 3-link pinned chain (shank, thigh, HAT)
// standing on a flat foot fixed to the ground, both legs lumped together.
//
// Generalized coordinates are relative joint angles in flexion-positive
// form: ankle dorsiflexion, knee flexion and hip flexion. Absolute segment
// angles from vertical follow as
//   shank = ankle, thigh = ankle - knee, HAT = ankle - knee + hip.
//
// Joint torques at the API boundary use the reporting convention of the
// device plots: ankle dorsiflexion positive, knee flexion positive and hip
// EXTENSION positive. `to_generalized` / `from_generalized` map between the
// two.

#include <Eigen/Core>

#include "exo/common.hpp"

namespace exo::dynamics {

enum Coord : int { kAnkle = 0, kKnee = 1, kHip = 2 };

using Triple = Eigen::Vector3d;

struct Segment {
  double length = 0.0;      // m
  double mass = 0.0;        // kg
  double com_offset = 0.0;  // m from the distal (chain-proximal) joint
  double inertia = 0.0;     // kg m^2 about the COM
};

struct BodyParams {
  double total_mass = 0.0;
  double height = 0.0;
  Segment shank;  // both shanks lumped
  Segment thigh;  // both thighs lumped
  Segment hat;    // head, arms, trunk
  double gravity = 9.81;

  /// Throws ValidationError naming the first violated invariant.
  void validate() const;
};

/// Default anthropometric fractions. Feet mass is the remainder and rides
/// on the ground.
struct AnthropometricFractions {
  double shank_mass = 0.093;
  double thigh_mass = 0.200;
  double hat_mass = 0.678;
  double shank_length = 0.246;
  double thigh_length = 0.245;
  double hat_length = 0.40;
  double com_fraction = 0.43;
  double gyration_fraction = 0.3;
};

BodyParams anthropometric_scale(double height, double mass,
                                const AnthropometricFractions& fractions = {});

/// Soft one-sided spring-damper limits in generalized coordinates.
struct JointStops {
  Triple lower;
  Triple upper;
  double stiffness = 200.0;  // N m / rad
  double damping = 5.0;      // N m s / rad
  bool enabled = true;
};

/// ankle [-30, 45] deg, knee [0, 150] deg, hip [-20, 120] deg.
JointStops default_stops();

struct Plant {
  BodyParams body;
  JointStops stops = default_stops();
};

struct PlantState {
  Triple q = Triple::Zero();
  Triple qdot = Triple::Zero();
  double t = 0.0;
};

/// Convention torque (hip extension positive) -> generalized force.
Triple to_generalized(const Triple& tau);
/// Generalized force -> convention torque.
Triple from_generalized(const Triple& force);

Eigen::Matrix3d mass_matrix(const Triple& q, const BodyParams& body);

/// Velocity-product plus gravity terms in generalized coordinates.
Triple bias_forces(const Triple& q, const Triple& qdot, const BodyParams& body);

/// Generalized resisting force the stops apply; zero inside the range.
Triple stop_forces(const Triple& q, const Triple& qdot, const JointStops& stops);

/// Joint torques (convention) that produce `qddot` at (q, qdot).
Triple inverse_dynamics(const Triple& q, const Triple& qdot, const Triple& qddot,
                        const BodyParams& body, const JointStops& stops = default_stops());

Triple forward_dynamics(const PlantState& state, const Triple& tau, const BodyParams& body,
                        const JointStops& stops = default_stops());

class IntegrationDiverged : public NumericalError {
 public:
  IntegrationDiverged(const PlantState& state, const std::string& what)
      : NumericalError(what), state_(state) {}
  const PlantState& state() const noexcept { return state_; }

 private:
  PlantState state_;
};

inline constexpr double kMaxStep = 0.005;

/// Semi-implicit Euler: qdot += qddot dt, then q += qdot dt.
PlantState step(const PlantState& state, const Triple& tau, const BodyParams& body, double dt,
                const JointStops& stops = default_stops());

/// Kinetic plus gravitational energy, potential measured from the ankle.
double mechanical_energy(const PlantState& state, const BodyParams& body);

/// Whole-body (shank, thigh, HAT) centre of mass relative to the ankle.
Eigen::Vector2d center_of_mass(const Triple& q, const BodyParams& body);

}  // namespace exo::dynamics
