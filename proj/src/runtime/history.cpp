#include <cmath>

#include "exo/runtime.hpp"

namespace exo::runtime {

LowPass2::LowPass2(double cutoff_hz, double sample_hz) {
  if (!(cutoff_hz > 0.0 && cutoff_hz < 0.5 * sample_hz)) {
    throw ValidationError("cutoff_hz", "must lie below Nyquist");
  }
  const double k = std::tan(kPi * cutoff_hz / sample_hz);
  const double root2 = std::sqrt(2.0);
  const double norm = 1.0 / (1.0 + root2 * k + k * k);
  b0_ = k * k * norm;
  b1_ = 2.0 * b0_;
  b2_ = b0_;
  a1_ = 2.0 * (k * k - 1.0) * norm;
  a2_ = (1.0 - root2 * k + k * k) * norm;
}

void LowPass2::reset(double steady_value) {
  x1_ = x2_ = y1_ = y2_ = steady_value;
  primed_ = true;
}

double LowPass2::filter(double x) {
  if (!primed_) reset(x);
  const double y = b0_ * x + b1_ * x1_ + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
  x2_ = x1_;
  x1_ = x;
  y2_ = y1_;
  y1_ = y;
  return y;
}

HistoryBuffer::HistoryBuffer(double cutoff_hz, double sample_hz)
    : filters_(kJointCount, LowPass2(cutoff_hz, sample_hz)) {}

bool HistoryBuffer::ingest(const JointVector& angles, std::int64_t t_ms) {
  if (!entries_.empty() && t_ms <= entries_.back().t_ms) {
    ++rejected_;
    return false;
  }
  Entry e{t_ms, angles, std::nullopt};
  if (entries_.size() >= 2) {
    const Entry& back2 = entries_[entries_.size() - 2];
    const double dt = static_cast<double>(t_ms - back2.t_ms) * 1e-3;
    JointVector v{};
    for (std::size_t j = 0; j < kJointCount; ++j) {
      v[j] = filters_[j].filter((angles[j] - back2.angles[j]) / dt);
    }
    e.velocity = v;
  }
  entries_.push_back(e);
  while (entries_.size() > kCapacity) entries_.pop_front();
  return true;
}

std::vector<ecn::JointSample> HistoryBuffer::network_history() const {
  std::vector<ecn::JointSample> out;
  for (const auto& e : entries_) {
    if (e.velocity) out.push_back({e.angles, *e.velocity});
  }
  if (out.size() > ecn::kHistory) out.erase(out.begin(), out.end() - static_cast<std::ptrdiff_t>(ecn::kHistory));
  return out;
}

const JointVector& HistoryBuffer::latest_angles() const {
  if (entries_.empty()) throw std::logic_error("HistoryBuffer is empty");
  return entries_.back().angles;
}

std::optional<JointVector> HistoryBuffer::latest_velocity() const {
  if (entries_.empty()) return std::nullopt;
  return entries_.back().velocity;
}

std::int64_t HistoryBuffer::latest_time() const {
  if (entries_.empty()) throw std::logic_error("HistoryBuffer is empty");
  return entries_.back().t_ms;
}

}  // namespace exo::runtime
