#include <algorithm>

#include "exo/ecn.hpp"

namespace exo::ecn {

std::optional<EcnState> build_state(std::span<const JointSample> history) {
  if (history.empty()) return std::nullopt;
  const std::size_t available = std::min(history.size(), kHistory);
  const std::size_t first = history.size() - available;
  const std::size_t padding = kHistory - available;

  EcnState s;
  for (std::size_t slot = 0; slot < kHistory; ++slot) {
    const std::size_t src = slot < padding ? first : first + (slot - padding);
    const JointSample& sample = history[src];
    const auto base = static_cast<Eigen::Index>(slot * 8);
    for (std::size_t j = 0; j < kJointCount; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      s[base + jj] = std::clamp(sample.angles[j] / kAngleScale, -1.0, 1.0);
      s[base + 4 + jj] = std::clamp(sample.velocities[j] / kVelocityScale, -1.0, 1.0);
    }
  }
  return s;
}

}  // namespace exo::ecn
