#include <array>
#include <cmath>

#include <Eigen/Dense>

#include "exo/dynamics.hpp"

namespace exo::dynamics {

namespace {

// Absolute segment angles phi = A q.
const Eigen::Matrix3d& coordinate_map() {
  static const Eigen::Matrix3d a = (Eigen::Matrix3d() << 1, 0, 0,  //
                                    1, -1, 0,                      //
                                    1, -1, 1)
                                       .finished();
  return a;
}

const Triple kConventionSign(1.0, 1.0, -1.0);

// Chain-ordered segment constants for the absolute-angle Lagrangian.
struct ChainTerms {
  std::array<double, 3> length{};
  std::array<double, 3> first_moment{};  // m_i d_i + (mass beyond i) L_i
  std::array<double, 3> diagonal{};      // I_i + m_i d_i^2 + (mass beyond i) L_i^2
};

ChainTerms chain_terms(const BodyParams& body) {
  const std::array<const Segment*, 3> seg = {&body.shank, &body.thigh, &body.hat};
  ChainTerms terms;
  for (int i = 0; i < 3; ++i) {
    double beyond = 0.0;
    for (int k = i + 1; k < 3; ++k) beyond += seg[k]->mass;
    const Segment& s = *seg[i];
    terms.length[i] = s.length;
    terms.first_moment[i] = s.mass * s.com_offset + beyond * s.length;
    terms.diagonal[i] = s.inertia + s.mass * s.com_offset * s.com_offset +
                        beyond * s.length * s.length;
  }
  return terms;
}

// a_ij for i != j: L_min(i,j) * first_moment_max(i,j).
double coupling(const ChainTerms& t, int i, int j) {
  const int lo = std::min(i, j);
  const int hi = std::max(i, j);
  return t.length[lo] * t.first_moment[hi];
}

Triple absolute_angles(const Triple& q) { return coordinate_map() * q; }

void check_finite(const Triple& v, const char* name) {
  if (!v.allFinite()) throw ValidationError(name, "non-finite input");
}

}  // namespace

JointStops default_stops() {
  JointStops stops;
  stops.lower = Triple(deg2rad(-30.0), deg2rad(0.0), deg2rad(-20.0));
  stops.upper = Triple(deg2rad(45.0), deg2rad(150.0), deg2rad(120.0));
  return stops;
}

Triple to_generalized(const Triple& tau) { return tau.cwiseProduct(kConventionSign); }
Triple from_generalized(const Triple& force) { return force.cwiseProduct(kConventionSign); }

Eigen::Matrix3d mass_matrix(const Triple& q, const BodyParams& body) {
  const ChainTerms t = chain_terms(body);
  const Triple phi = absolute_angles(q);
  Eigen::Matrix3d m_abs;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      m_abs(i, j) = (i == j) ? t.diagonal[i] : coupling(t, i, j) * std::cos(phi[i] - phi[j]);
    }
  }
  const Eigen::Matrix3d& a = coordinate_map();
  return a.transpose() * m_abs * a;
}

Triple bias_forces(const Triple& q, const Triple& qdot, const BodyParams& body) {
  const ChainTerms t = chain_terms(body);
  const Triple phi = absolute_angles(q);
  const Triple phidot = coordinate_map() * qdot;
  Triple abs_bias;
  for (int i = 0; i < 3; ++i) {
    double velocity_terms = 0.0;
    for (int j = 0; j < 3; ++j) {
      if (j == i) continue;
      velocity_terms += coupling(t, i, j) * std::sin(phi[i] - phi[j]) * phidot[j] * phidot[j];
    }
    const double gravity = -body.gravity * t.first_moment[i] * std::sin(phi[i]);
    abs_bias[i] = velocity_terms + gravity;
  }
  return coordinate_map().transpose() * abs_bias;
}

Triple stop_forces(const Triple& q, const Triple& qdot, const JointStops& stops) {
  Triple force = Triple::Zero();
  if (!stops.enabled) return force;
  for (int j = 0; j < 3; ++j) {
    if (q[j] < stops.lower[j]) {
      const double push = stops.stiffness * (stops.lower[j] - q[j]) - stops.damping * qdot[j];
      force[j] = std::max(0.0, push);
    } else if (q[j] > stops.upper[j]) {
      const double push = stops.stiffness * (q[j] - stops.upper[j]) + stops.damping * qdot[j];
      force[j] = -std::max(0.0, push);
    }
  }
  return force;
}

Triple inverse_dynamics(const Triple& q, const Triple& qdot, const Triple& qddot,
                        const BodyParams& body, const JointStops& stops) {
  check_finite(q, "q");
  check_finite(qdot, "qdot");
  check_finite(qddot, "qddot");
  const Triple generalized =
      mass_matrix(q, body) * qddot + bias_forces(q, qdot, body) - stop_forces(q, qdot, stops);
  return from_generalized(generalized);
}

Triple forward_dynamics(const PlantState& state, const Triple& tau, const BodyParams& body,
                        const JointStops& stops) {
  check_finite(state.q, "q");
  check_finite(state.qdot, "qdot");
  check_finite(tau, "tau");
  const Eigen::Matrix3d m = mass_matrix(state.q, body);
  const Triple rhs = to_generalized(tau) - bias_forces(state.q, state.qdot, body) +
                     stop_forces(state.q, state.qdot, stops);
  Eigen::LLT<Eigen::Matrix3d> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("forward_dynamics: mass matrix not positive definite");
  }
  return llt.solve(rhs);
}

PlantState step(const PlantState& state, const Triple& tau, const BodyParams& body, double dt,
                const JointStops& stops) {
  if (!(dt > 0.0 && dt <= kMaxStep)) throw ValidationError("dt", "must lie in (0, 5 ms]");
  PlantState next = state;
  Triple qddot;
  try {
    qddot = forward_dynamics(state, tau, body, stops);
  } catch (const NumericalError& e) {
    throw IntegrationDiverged(state, e.what());
  }
  next.qdot = state.qdot + qddot * dt;
  next.q = state.q + next.qdot * dt;
  next.t = state.t + dt;
  if (!next.q.allFinite() || !next.qdot.allFinite()) {
    throw IntegrationDiverged(next, "integration diverged");
  }
  return next;
}

double mechanical_energy(const PlantState& state, const BodyParams& body) {
  const double kinetic = 0.5 * state.qdot.dot(mass_matrix(state.q, body) * state.qdot);
  const ChainTerms t = chain_terms(body);
  const Triple phi = absolute_angles(state.q);
  double potential = 0.0;
  for (int i = 0; i < 3; ++i) potential += body.gravity * t.first_moment[i] * std::cos(phi[i]);
  return kinetic + potential;
}

Eigen::Vector2d center_of_mass(const Triple& q, const BodyParams& body) {
  const Triple phi = absolute_angles(q);
  const std::array<const Segment*, 3> seg = {&body.shank, &body.thigh, &body.hat};
  Eigen::Vector2d joint = Eigen::Vector2d::Zero();
  Eigen::Vector2d weighted = Eigen::Vector2d::Zero();
  double mass = 0.0;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector2d axis(std::sin(phi[i]), std::cos(phi[i]));
    weighted += seg[i]->mass * (joint + seg[i]->com_offset * axis);
    mass += seg[i]->mass;
    joint += seg[i]->length * axis;
  }
  return weighted / mass;
}

}  // namespace exo::dynamics
