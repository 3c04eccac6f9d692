#include <algorithm>

#include "exo/cpn.hpp"

namespace exo::cpn {

ecn::Action dataset_target(const dynamics::ReferencePoint& ref, const dynamics::Plant& plant,
                           double torque_norm) {
  if (!(torque_norm > 0.0)) throw ValidationError("torque_norm", "must be positive");
  const Triple tau = dynamics::inverse_dynamics(ref.q, ref.qdot, ref.qddot, plant.body, plant.stops);
  const double hip = std::clamp(0.5 * tau[dynamics::kHip] / torque_norm, -1.0, 1.0);
  const double knee = std::clamp(0.5 * tau[dynamics::kKnee] / torque_norm, -1.0, 1.0);
  return {hip, hip, knee, knee};
}

std::vector<ecn::TrainingSample> generate_dataset(const dynamics::Plant& plant,
                                                  const PdGains& gains,
                                                  const dynamics::SquatReference& nominal,
                                                  const DatasetConfig& config) {
  if (config.scales.empty()) throw ValidationError("scales", "must not be empty");
  if (config.cycles < 1) throw ValidationError("cycles", "must be at least 1");
  if (!(config.angle_sigma >= 0.0)) throw ValidationError("angle_sigma", "must be >= 0");

  std::vector<ecn::TrainingSample> out;
  for (std::size_t k = 0; k < config.scales.size(); ++k) {
    const auto ref = dynamics::scale_reference_time(nominal, config.scales[k]);
    RolloutOptions opt;
    opt.cycles = config.cycles;
    opt.noise = {config.angle_sigma, config.seed + k};
    opt.on_tick = [&](const TickRecord&, const runtime::HistoryBuffer& sensors,
                      const dynamics::ReferencePoint& target) {
      const auto state = ecn::build_state(sensors.network_history());
      if (!state) return;
      out.push_back({*state, dataset_target(target, plant, config.torque_norm)});
    };
    rollout(plant, gains, ref, opt);
  }
  return out;
}

}  // namespace exo::cpn
