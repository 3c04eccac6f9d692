#include <cmath>
#include <random>

#include "exo/cpn.hpp"

namespace exo::cpn {

double gain_objective(const PdGains& gains, const dynamics::Plant& plant,
                      const std::vector<dynamics::SquatReference>& references, int cycles) {
  if (references.empty()) throw ValidationError("references", "must not be empty");
  double sum = 0.0;
  for (const auto& ref : references) {
    RolloutOptions opt;
    opt.cycles = cycles;
    try {
      sum += motion_match_reward(rollout(plant, gains, ref, opt), ref);
    } catch (const RolloutDiverged&) {
      // scores zero
    }
  }
  return sum / static_cast<double>(references.size());
}

GainSearchResult optimize_gains(const PdGains& initial, const dynamics::Plant& plant,
                                const dynamics::SquatReference& nominal,
                                const GainSearchConfig& config) {
  if (config.budget < 50) throw ValidationError("budget", "need at least 50 evaluations");
  if (config.offspring < 1) throw ValidationError("offspring", "must be positive");
  if (!(config.sigma > 0.0)) throw ValidationError("sigma", "must be positive");
  if (config.cycles_per_scale < 1) throw ValidationError("cycles_per_scale", "must be positive");
  initial.validate();

  std::vector<dynamics::SquatReference> refs;
  for (double s : config.scales) refs.push_back(dynamics::scale_reference_time(nominal, s));

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  GainSearchResult result;
  result.gains = initial;
  result.objective = gain_objective(initial, plant, refs, config.cycles_per_scale);
  result.initial_objective = result.objective;
  result.evaluations = 1;
  bool any_alive = result.objective > 0.0;
  result.trace.push_back({0, 1, result.objective, initial});

  int generation = 0;
  while (result.evaluations + config.offspring <= config.budget) {
    ++generation;
    PdGains parent = result.gains;
    PdGains best_child = parent;
    double best_child_obj = -1.0;
    for (int c = 0; c < config.offspring; ++c) {
      PdGains child = parent;
      for (int i = 0; i < 3; ++i) {
        child.kp[i] *= std::exp(config.sigma * normal(rng));
        child.kd[i] *= std::exp(config.sigma * normal(rng));
      }
      const double obj = gain_objective(child, plant, refs, config.cycles_per_scale);
      ++result.evaluations;
      any_alive |= obj > 0.0;
      if (obj > best_child_obj) {
        best_child_obj = obj;
        best_child = child;
      }
    }
    if (best_child_obj >= result.objective) {
      result.objective = best_child_obj;
      result.gains = best_child;
    }
    result.trace.push_back({generation, result.evaluations, result.objective, result.gains});
  }
  if (!any_alive) {
    throw OptimizationFailed("every rollout diverged over " + std::to_string(result.evaluations) +
                             " evaluations starting from kp = (" + std::to_string(initial.kp[0]) +
                             ", " + std::to_string(initial.kp[1]) + ", " +
                             std::to_string(initial.kp[2]) + ")");
  }
  return result;
}

}  // namespace exo::cpn
