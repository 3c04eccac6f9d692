#pragma once

// Simulated human: computed-torque tracking of the squat reference with PD
// feedback, the motion-matching reward, an evolution-strategy gain search
// and closed-loop rollouts with idealized exoskeleton assistance.

#include <cstdint>
#include <functional>
#include <vector>

#include "exo/dynamics.hpp"
#include "exo/ecn.hpp"
#include "exo/muscle.hpp"
#include "exo/reference.hpp"
#include "exo/runtime.hpp"

namespace exo::cpn {

using dynamics::Triple;

struct PdGains {
  Triple kp = Triple::Constant(50.0);  // N m / rad
  Triple kd = Triple::Constant(5.0);   // N m s / rad

  void validate() const;
};

/// ID feedforward of the reference plus PD feedback. Feedback is formed in
/// joint coordinates (flexion positive) and reported in the torque
/// convention like the feedforward.
Triple compute_human_torque(const dynamics::PlantState& state, const dynamics::ReferencePoint& ref,
                            const PdGains& gains, const dynamics::Plant& plant);

struct TickRecord {
  double t = 0.0;
  double phase = 0.0;
  Triple q = Triple::Zero();
  Triple qdot = Triple::Zero();
  Triple human_torque = Triple::Zero();  // convention, lumped
  JointVector exo_torque{};              // per leg, N m
  std::vector<double> activations;       // empty unless muscles are solved
  bool muscle_feasible = true;
};

struct RolloutLog {
  std::vector<TickRecord> ticks;
  double tick_dt = 0.01;
};

inline constexpr int kTickHz = 100;
inline constexpr int kSubsteps = 10;

/// Angle noise and seed for the exoskeleton's view of the joints.
struct SensorNoise {
  double angle_sigma = 0.0;  // rad
  std::uint64_t seed = 0;
};

struct RolloutOptions {
  int cycles = 1;
  const ecn::MlpParams* ecn = nullptr;  // no assistance when null
  double tau_max = 10.0;
  double assist_scale = 1.0;
  const std::vector<muscle::MuscleParams>* muscles = nullptr;
  SensorNoise noise{};
  /// Called every tick with the record, the sensor history and the
  /// reference point, before the tick is integrated.
  std::function<void(const TickRecord&, const runtime::HistoryBuffer&,
                     const dynamics::ReferencePoint&)>
      on_tick;
};

class RolloutDiverged : public NumericalError {
 public:
  RolloutDiverged(RolloutLog partial, const std::string& what)
      : NumericalError(what), partial_(std::move(partial)) {}
  const RolloutLog& partial() const noexcept { return partial_; }

 private:
  RolloutLog partial_;
};

/// Integrates one control tick: kSubsteps steps of 1 ms, the human torque
/// refreshed every substep, `exo` (lumped, convention) held. Throws
/// dynamics::IntegrationDiverged.
void advance_tick(const dynamics::Plant& plant, const PdGains& gains,
                  const dynamics::SquatReference& ref, dynamics::PlantState& state, const Triple& exo);

/// Lumped hip/knee convention torque of a per-leg command.
Triple lumped_exo_torque(const JointVector& per_leg);

RolloutLog rollout(const dynamics::Plant& plant, const PdGains& gains,
                   const dynamics::SquatReference& ref, const RolloutOptions& options);

/// Default muscle set sized to the reference's peak hip and knee extension
/// torques, fibers at optimal length in the middle of the motion range.
std::vector<muscle::MuscleParams> muscles_for_reference(const dynamics::SquatReference& ref,
                                                        const dynamics::Plant& plant);

/// Mean over ticks of exp(-5 |q - q_ref(phase)|^2).
double motion_match_reward(const RolloutLog& log, const dynamics::SquatReference& ref);

/// Root mean square over ticks of the lumped human hip and knee torques.
double human_torque_rms(const RolloutLog& log);

/// effort_metric over logged activations (requires muscles in the rollout).
double rollout_effort(const RolloutLog& log);

struct GainSearchConfig {
  int budget = 1000;         // rollout evaluations, >= 50
  int offspring = 8;
  double sigma = 0.2;
  int cycles_per_scale = 1;
  std::vector<double> scales{0.8, 0.9, 1.0, 1.1, 1.2};
  std::uint64_t seed = 42;
};

struct GenerationRecord {
  int generation = 0;
  int evaluations = 0;
  double best_objective = 0.0;
  PdGains best;
};

struct GainSearchResult {
  PdGains gains;
  double objective = 0.0;
  double initial_objective = 0.0;
  int evaluations = 0;
  std::vector<GenerationRecord> trace;
};

class OptimizationFailed : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Mean reward over the scaled references; a diverged rollout scores 0.
double gain_objective(const PdGains& gains, const dynamics::Plant& plant,
                      const std::vector<dynamics::SquatReference>& references, int cycles);

/// (1+lambda) evolution strategy with log-normal mutation.
GainSearchResult optimize_gains(const PdGains& initial, const dynamics::Plant& plant,
                                const dynamics::SquatReference& nominal,
                                const GainSearchConfig& config);

struct DatasetConfig {
  std::vector<double> scales{0.8, 0.9, 1.0, 1.1, 1.2};
  int cycles = 10;
  double angle_sigma = 0.01;
  double torque_norm = 10.0;  // N m per leg mapped to 1
  std::uint64_t seed = 42;
};

/// Supervised ECN samples from tracking rollouts across time scales. Each
/// 100 Hz tick pairs the noisy sensor history with the reference's per-leg
/// hip/knee inverse-dynamics torque divided by torque_norm.
std::vector<ecn::TrainingSample> generate_dataset(const dynamics::Plant& plant,
                                                  const PdGains& gains,
                                                  const dynamics::SquatReference& nominal,
                                                  const DatasetConfig& config);

/// Per-leg hip/knee target in torque_norm units for a reference point.
ecn::Action dataset_target(const dynamics::ReferencePoint& ref, const dynamics::Plant& plant,
                           double torque_norm);

}  // namespace exo::cpn
