#include <algorithm>
#include <cmath>
#include <random>

#include "exo/cpn.hpp"

namespace exo::cpn {

using dynamics::PlantState;
using dynamics::ReferencePoint;

void PdGains::validate() const {
  if (!kp.allFinite() || (kp.array() < 0.0).any()) throw ValidationError("kp", "must be finite and >= 0");
  if (!kd.allFinite() || (kd.array() < 0.0).any()) throw ValidationError("kd", "must be finite and >= 0");
}

Triple compute_human_torque(const PlantState& state, const ReferencePoint& ref, const PdGains& gains,
                            const dynamics::Plant& plant) {
  const Triple feedforward =
      dynamics::inverse_dynamics(ref.q, ref.qdot, ref.qddot, plant.body, plant.stops);
  const Triple feedback =
      gains.kp.cwiseProduct(ref.q - state.q) + gains.kd.cwiseProduct(ref.qdot - state.qdot);
  return feedforward + dynamics::from_generalized(feedback);
}

namespace {

constexpr double kRunawayVelocity = 1e3;  // rad/s

JointVector sensor_angles(const Triple& q, std::mt19937_64& rng, double sigma) {
  JointVector a{q[dynamics::kHip], q[dynamics::kHip], q[dynamics::kKnee], q[dynamics::kKnee]};
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (double& v : a) v += noise(rng);
  }
  return a;
}

}  // namespace

Triple lumped_exo_torque(const JointVector& per_leg) {
  Triple exo = Triple::Zero();
  exo[dynamics::kHip] = per_leg[kHipL] + per_leg[kHipR];
  exo[dynamics::kKnee] = per_leg[kKneeL] + per_leg[kKneeR];
  return exo;
}

void advance_tick(const dynamics::Plant& plant, const PdGains& gains,
                  const dynamics::SquatReference& ref, PlantState& state, const Triple& exo) {
  const double sub_dt = 1.0 / (kTickHz * kSubsteps);
  const double t0 = state.t;
  for (int s = 0; s < kSubsteps; ++s) {
    const Triple human = compute_human_torque(state, ref.at_time(t0 + s * sub_dt), gains, plant);
    state = dynamics::step(state, human + exo, plant.body, sub_dt, plant.stops);
  }
  state.t = t0 + 1.0 / kTickHz;
  if (state.qdot.cwiseAbs().maxCoeff() > kRunawayVelocity) {
    throw dynamics::IntegrationDiverged(state, "joint velocity runaway");
  }
}

RolloutLog rollout(const dynamics::Plant& plant, const PdGains& gains,
                   const dynamics::SquatReference& ref, const RolloutOptions& options) {
  if (options.cycles < 1) throw ValidationError("cycles", "must be at least 1");
  if (!(options.tau_max >= 0.0 && options.tau_max <= 25.0)) {
    throw ValidationError("tau_max", "must lie in [0, 25] N m");
  }
  if (!(options.assist_scale >= 0.0 && options.assist_scale <= 1.0)) {
    throw ValidationError("assist_scale", "must lie in [0, 1]");
  }
  gains.validate();

  const double tick_dt = 1.0 / kTickHz;
  const auto ticks_per_cycle = static_cast<long>(std::llround(ref.period() * kTickHz));
  const long total_ticks = ticks_per_cycle * options.cycles;

  std::mt19937_64 rng(options.noise.seed);
  runtime::HistoryBuffer sensors;
  // The sensors have been running before the rollout starts.
  for (int k = 2; k >= 1; --k) {
    const ReferencePoint before = ref.at_time(-k * tick_dt);
    sensors.ingest(sensor_angles(before.q, rng, options.noise.angle_sigma), -10 * k);
  }

  RolloutLog log;
  log.tick_dt = tick_dt;
  log.ticks.reserve(static_cast<std::size_t>(total_ticks));
  const ReferencePoint start = ref.at_phase(0.0);
  PlantState state{start.q, start.qdot, 0.0};

  for (long tick = 0; tick < total_ticks; ++tick) {
    const double t = static_cast<double>(tick) * tick_dt;
    state.t = t;
    const ReferencePoint target = ref.at_time(t);
    sensors.ingest(sensor_angles(state.q, rng, options.noise.angle_sigma), tick * 10);

    TickRecord rec;
    rec.t = t;
    rec.phase = target.phase;
    rec.q = state.q;
    rec.qdot = state.qdot;
    rec.human_torque = compute_human_torque(state, target, gains, plant);
    if (!rec.human_torque.allFinite()) throw RolloutDiverged(std::move(log), "non-finite human torque");

    if (options.ecn != nullptr) {
      const auto s = ecn::build_state(sensors.network_history());
      if (s) {
        const ecn::Action a = ecn::forward(*options.ecn, *s);
        const double gain = options.assist_scale * options.tau_max;
        for (std::size_t j = 0; j < kJointCount; ++j) {
          rec.exo_torque[j] = gain * a[static_cast<Eigen::Index>(j)];
        }
      }
    }

    if (options.muscles != nullptr) {
      std::vector<muscle::FiberKinematics> fibers;
      fibers.reserve(options.muscles->size());
      for (const auto& m : *options.muscles) fibers.push_back(muscle::fiber_kinematics(m, state.q, state.qdot));
      const auto so = muscle::static_optimization(
          {rec.human_torque[dynamics::kHip], rec.human_torque[dynamics::kKnee]}, *options.muscles, fibers);
      rec.activations = so.activations;
      rec.muscle_feasible = so.feasible;
    }

    if (options.on_tick) options.on_tick(rec, sensors, target);

    const Triple exo = lumped_exo_torque(rec.exo_torque);
    log.ticks.push_back(std::move(rec));

    try {
      advance_tick(plant, gains, ref, state, exo);
    } catch (const dynamics::IntegrationDiverged& e) {
      throw RolloutDiverged(std::move(log), std::string("rollout diverged at t = ") +
                                                std::to_string(t) + " s: " + e.what());
    }
  }
  return log;
}

std::vector<muscle::MuscleParams> muscles_for_reference(const dynamics::SquatReference& ref,
                                                        const dynamics::Plant& plant) {
  double hip_ext = 0.0;
  double knee_ext = 0.0;
  Triple lo = Triple::Constant(std::numeric_limits<double>::infinity());
  Triple hi = -lo;
  for (const auto& s : ref.samples()) {
    const Triple tau = dynamics::inverse_dynamics(s.q, s.qdot, s.qddot, plant.body, plant.stops);
    hip_ext = std::max(hip_ext, tau[dynamics::kHip]);
    knee_ext = std::max(knee_ext, -tau[dynamics::kKnee]);
    lo = lo.cwiseMin(s.q);
    hi = hi.cwiseMax(s.q);
  }
  if (hip_ext <= 0.0) hip_ext = 1.0;
  if (knee_ext <= 0.0) knee_ext = 1.0;
  return muscle::default_muscle_set(hip_ext, knee_ext, 0.5 * (lo + hi));
}

double motion_match_reward(const RolloutLog& log, const dynamics::SquatReference& ref) {
  if (log.ticks.empty()) throw ValidationError("rollout", "must not be empty");
  double sum = 0.0;
  for (const auto& tick : log.ticks) {
    const Triple e = tick.q - ref.at_phase(tick.phase).q;
    sum += std::exp(-5.0 * e.squaredNorm());
  }
  return sum / static_cast<double>(log.ticks.size());
}

double human_torque_rms(const RolloutLog& log) {
  if (log.ticks.empty()) throw ValidationError("rollout", "must not be empty");
  double sum = 0.0;
  for (const auto& tick : log.ticks) {
    const double hip = tick.human_torque[dynamics::kHip];
    const double knee = tick.human_torque[dynamics::kKnee];
    sum += hip * hip + knee * knee;
  }
  return std::sqrt(sum / static_cast<double>(log.ticks.size()));
}

double rollout_effort(const RolloutLog& log) {
  std::vector<std::vector<double>> rows;
  rows.reserve(log.ticks.size());
  for (const auto& tick : log.ticks) {
    if (tick.activations.empty()) throw ValidationError("activations", "rollout ran without muscles");
    rows.push_back(tick.activations);
  }
  return muscle::effort_metric(rows, log.tick_dt);
}

}  // namespace exo::cpn
