#pragma once

#include <filesystem>
#include <vector>

#include "exo/dynamics.hpp"

namespace exo::dynamics {

struct SquatDepth {
  double knee_peak = deg2rad(120.0);  // rad
  double hip_peak = deg2rad(95.0);    // rad
};

struct ReferenceSample {
  double phase = 0.0;
  Triple q = Triple::Zero();
  Triple qdot = Triple::Zero();   // rad/s at the reference's own period
  Triple qddot = Triple::Zero();  // rad/s^2
};

struct ReferencePoint {
  Triple q = Triple::Zero();
  Triple qdot = Triple::Zero();
  Triple qddot = Triple::Zero();
  double phase = 0.0;
};

/// Cyclic squat trajectory over phase [0, 1]. Between samples the
/// trajectory is the quintic Hermite through (q, q', q''), which reproduces
/// the generating cubic spline exactly.
class SquatReference {
 public:
  SquatReference() = default;
  SquatReference(double period, SquatDepth depth, double time_scale,
                 std::vector<ReferenceSample> samples);

  double period() const noexcept { return period_; }
  double time_scale() const noexcept { return time_scale_; }
  const SquatDepth& depth() const noexcept { return depth_; }
  const std::vector<ReferenceSample>& samples() const noexcept { return samples_; }

  ReferencePoint at_phase(double phase) const;
  /// Wraps t onto the cycle.
  ReferencePoint at_time(double t) const;

 private:
  double period_ = 4.0;
  SquatDepth depth_{};
  double time_scale_ = 1.0;
  std::vector<ReferenceSample> samples_;
};

inline constexpr double kDefaultPeriod = 4.0;
inline constexpr int kDefaultReferenceSamples = 201;

/// Raised-cosine knee/hip descent and ascent peaking at phase 0.5; ankle
/// solved per sample so the whole-body COM sits above the ankle.
/// Throws NumericalError("infeasible depth") when the balance root is not
/// bracketed.
SquatReference generate_reference(const SquatDepth& depth, double period, int n_samples,
                                  const BodyParams& body);

/// period / scale, velocities * scale, accelerations * scale^2.
SquatReference scale_reference_time(const SquatReference& ref, double scale);

void save_reference_csv(const SquatReference& ref, const std::filesystem::path& path);
SquatReference load_reference_csv(const std::filesystem::path& path);

/// Ankle angle placing the COM above the ankle for the given knee/hip,
/// by bisection over [-pi/2, pi/2].
double balance_ankle_angle(double knee, double hip, const BodyParams& body,
                           double tolerance = 1e-10);

}  // namespace exo::dynamics
