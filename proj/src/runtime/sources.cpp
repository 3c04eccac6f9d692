#include <cmath>

#include "exo/session.hpp"

namespace exo::runtime {

SimulatedSubject::SimulatedSubject(dynamics::Plant plant, cpn::PdGains gains,
                                   dynamics::SquatReference ref, double angle_sigma,
                                   std::uint64_t seed)
    : plant_(std::move(plant)), gains_(gains), ref_(std::move(ref)), sigma_(angle_sigma), rng_(seed) {
  gains_.validate();
  if (!(sigma_ >= 0.0)) throw ValidationError("angle_sigma", "must be >= 0");
  const auto start = ref_.at_phase(0.0);
  state_ = {start.q, start.qdot, 0.0};
}

std::optional<SourceSample> SimulatedSubject::next(const JointVector& applied) {
  if (tick_ > 0) cpn::advance_tick(plant_, gains_, ref_, state_, cpn::lumped_exo_torque(applied));
  SourceSample s;
  s.t_ms = tick_ * kTickMs;
  const double hip = state_.q[dynamics::kHip];
  const double knee = state_.q[dynamics::kKnee];
  s.angles = {hip, hip, knee, knee};
  if (sigma_ > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma_);
    for (double& a : s.angles) a += noise(rng_);
  }
  ++tick_;
  return s;
}

ReplaySource::ReplaySource(const std::filesystem::path& path) {
  const csv::Table table = csv::read(path);
  const std::size_t t_col = table.column("t_ms");
  std::array<std::size_t, kJointCount> angle_cols{};
  for (std::size_t j = 0; j < kJointCount; ++j) {
    angle_cols[j] = table.column(std::string("angle_") + kJointNames[j]);
  }
  const bool has_mode = table.has_column("mode");
  const bool has_scale = table.has_column("scale");
  const std::size_t mode_col = has_mode ? table.column("mode") : 0;
  const std::size_t scale_col = has_scale ? table.column("scale") : 0;

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = "line " + std::to_string(table.line_numbers[r]);
    try {
      SourceSample s;
      const double t = csv::parse_double(row[t_col], "t_ms");
      if (t != std::floor(t)) throw FormatError("t_ms", "not an integer");
      s.t_ms = static_cast<std::int64_t>(t);
      for (std::size_t j = 0; j < kJointCount; ++j) {
        s.angles[j] = csv::parse_double(row[angle_cols[j]], kJointNames[j]);
      }
      if (has_mode) {
        s.mode = parse_mode(row[mode_col]);
        if (!s.mode) throw FormatError("mode", "unknown mode '" + row[mode_col] + "'");
      }
      if (has_scale) s.scale = csv::parse_double(row[scale_col], "scale");
      samples_.push_back(s);
    } catch (const FormatError& e) {
      throw FormatError(where, e.what());
    }
  }
  if (samples_.empty()) throw FormatError(path.string(), "no samples");
}

std::optional<SourceSample> ReplaySource::next(const JointVector&) {
  if (cursor_ >= samples_.size()) return std::nullopt;
  return samples_[cursor_++];
}

}  // namespace exo::runtime
