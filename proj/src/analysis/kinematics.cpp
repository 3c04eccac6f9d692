#include <algorithm>
#include <cmath>

#include "exo/analysis.hpp"

namespace exo::analysis {

std::vector<double> moving_average(std::span<const double> x, std::size_t window) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  const std::size_t half = window / 2;
  std::vector<double> prefix(x.size() + 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) prefix[i + 1] = prefix[i] + x[i];
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(x.size() - 1, i + half);
    out[i] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
  }
  return out;
}

std::vector<Cycle> segment_cycles(std::span<const double> knee_rad, const SegmentationConfig& config) {
  if (!(config.sample_hz > 0.0)) throw ValidationError("sample_hz", "must be positive");
  if (!(config.standing_below_deg < config.peak_above_deg)) {
    throw ValidationError("standing_below_deg", "must be below peak_above_deg");
  }
  for (double v : knee_rad) {
    if (!std::isfinite(v)) throw ValidationError("knee", "non-finite angle");
  }
  const auto window = static_cast<std::size_t>(std::max(1.0, std::round(config.smoothing_s * config.sample_hz)));
  const std::vector<double> s = moving_average(knee_rad, window);
  const double standing = deg2rad(config.standing_below_deg);
  const double peak = deg2rad(config.peak_above_deg);

  // Boundary of each standing interval: its smoothed minimum.
  std::vector<std::size_t> boundaries;
  std::vector<double> gap_peak;  // max flexion since the previous boundary
  double running_max = -1e300;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] >= standing) {
      running_max = std::max(running_max, s[i]);
      ++i;
      continue;
    }
    std::size_t best = i;
    while (i < s.size() && s[i] < standing) {
      if (s[i] < s[best]) best = i;
      ++i;
    }
    boundaries.push_back(best);
    gap_peak.push_back(running_max);
    running_max = -1e300;
  }

  // A standing dip without a squat since the last boundary only moves the
  // start forward.
  std::vector<Cycle> merged;
  std::size_t start = boundaries.empty() ? 0 : boundaries[0];
  for (std::size_t b = 1; b < boundaries.size(); ++b) {
    if (gap_peak[b] > peak) {
      merged.push_back({start, boundaries[b]});
    }
    start = boundaries[b];
  }
  return merged;
}

std::vector<double> resample_cycle(std::span<const double> series, Cycle cycle, std::size_t points) {
  if (points < 2) throw ValidationError("points", "need at least 2");
  if (cycle.end <= cycle.begin || cycle.end >= series.size()) {
    throw ValidationError("cycle", "boundaries outside the series");
  }
  std::vector<double> out(points);
  const double span = static_cast<double>(cycle.end - cycle.begin);
  for (std::size_t k = 0; k < points; ++k) {
    const double pos = static_cast<double>(cycle.begin) + span * static_cast<double>(k) / static_cast<double>(points - 1);
    const auto lo = std::min(static_cast<std::size_t>(std::floor(pos)), cycle.end - 1);
    const double f = pos - static_cast<double>(lo);
    out[k] = series[lo] * (1.0 - f) + series[lo + 1] * f;
  }
  return out;
}

CycleCurves combine_curves(const std::vector<std::vector<double>>& curves) {
  if (curves.empty()) throw ValidationError("cycles", "no cycles to combine");
  const std::size_t points = curves.front().size();
  CycleCurves c;
  c.cycles = curves.size();
  c.phase.resize(points);
  c.mean.assign(points, 0.0);
  c.sd.assign(points, 0.0);
  for (const auto& v : curves) {
    if (v.size() != points) throw ValidationError("cycles", "curves differ in length");
  }
  const double n = static_cast<double>(curves.size());
  for (std::size_t k = 0; k < points; ++k) {
    c.phase[k] = points > 1 ? 100.0 * static_cast<double>(k) / static_cast<double>(points - 1) : 0.0;
    double sum = 0.0;
    for (const auto& v : curves) sum += v[k];
    c.mean[k] = sum / n;
    double ss = 0.0;
    for (const auto& v : curves) ss += (v[k] - c.mean[k]) * (v[k] - c.mean[k]);
    c.sd[k] = std::sqrt(ss / n);
  }
  return c;
}

CycleCurves resample_cycles(std::span<const double> series, std::span<const Cycle> cycles, std::size_t points) {
  std::vector<std::vector<double>> curves;
  curves.reserve(cycles.size());
  for (const auto& cyc : cycles) curves.push_back(resample_cycle(series, cyc, points));
  return combine_curves(curves);
}

double peak_flexion_deg(const CycleCurves& curves) {
  if (curves.mean.empty()) throw ValidationError("curves", "empty");
  return rad2deg(*std::max_element(curves.mean.begin(), curves.mean.end()));
}

}  // namespace exo::analysis
