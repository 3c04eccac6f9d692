#include <algorithm>
#include <cmath>
#include <limits>

#include "exo/analysis.hpp"
#include "exo/csv.hpp"

namespace exo::analysis {

double brockway_power(double vo2_ml_min, double vco2_ml_min, double mass_kg) {
  if (!(mass_kg > 0.0)) throw ValidationError("mass", "must be positive");
  return (0.278 * vo2_ml_min + 0.075 * vco2_ml_min) / mass_kg;
}

void validate_metabolic(std::span<const MetabolicSample> records) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::string row = "row " + std::to_string(i + 1);
    if (!(r.vo2 >= 0.0) || !(r.vco2 >= 0.0)) throw ValidationError(row, "gas rates must be >= 0");
    if (!std::isfinite(r.t)) throw ValidationError(row, "non-finite time");
    if (i > 0 && r.t < records[i - 1].t) throw ValidationError(row, "time decreases");
  }
}

std::vector<MetabolicSample> load_metabolic_csv(const std::filesystem::path& path) {
  const csv::Table table = csv::read(path);
  const std::size_t t_col = table.column("t_s");
  const std::size_t vo2_col = table.column("VO2_ml_min");
  const std::size_t vco2_col = table.column("VCO2_ml_min");
  const bool has_hr = table.has_column("HR_bpm");
  const std::size_t hr_col = has_hr ? table.column("HR_bpm") : 0;
  std::vector<MetabolicSample> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    try {
      MetabolicSample s;
      s.t = csv::parse_double(row[t_col], "t_s");
      s.vo2 = csv::parse_double(row[vo2_col], "VO2_ml_min");
      s.vco2 = csv::parse_double(row[vco2_col], "VCO2_ml_min");
      if (has_hr && !row[hr_col].empty()) s.hr = csv::parse_double(row[hr_col], "HR_bpm");
      out.push_back(s);
    } catch (const FormatError& e) {
      throw FormatError(path.string() + " line " + std::to_string(table.line_numbers[r]), e.what());
    }
  }
  try {
    validate_metabolic(out);
  } catch (const ValidationError& e) {
    throw FormatError(path.string(), e.what());
  }
  return out;
}

Window last_seconds(std::span<const MetabolicSample> records, double seconds) {
  if (records.empty()) throw ValidationError("records", "empty trial");
  const double end = records.back().t;
  return {end - seconds, end};
}

namespace {

void check_window(std::span<const MetabolicSample> records, Window w) {
  if (records.empty()) throw ValidationError("records", "empty trial");
  if (!(w.begin <= w.end)) throw ValidationError("window", "begin after end");
  if (w.begin < records.front().t || w.end > records.back().t) {
    throw ValidationError("window", "outside the recorded trial");
  }
}

}  // namespace

double gross_metabolic_rate(std::span<const MetabolicSample> records, Window window, double mass_kg) {
  check_window(records, window);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.t < window.begin || r.t > window.end) continue;
    sum += brockway_power(r.vo2, r.vco2, mass_kg);
    ++n;
  }
  if (n == 0) throw ValidationError("window", "contains no breaths");
  return sum / static_cast<double>(n);
}

double net_metabolic_rate(std::span<const MetabolicSample> records, Window window,
                          double resting_w_kg, double mass_kg) {
  return gross_metabolic_rate(records, window, mass_kg) - resting_w_kg;
}

std::optional<double> mean_heart_rate(std::span<const MetabolicSample> records, Window window) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.t < window.begin || r.t > window.end || !r.hr) continue;
    sum += *r.hr;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

double percent_change(double zero_torque, double other) {
  if (zero_torque == 0.0 || !std::isfinite(zero_torque)) {
    throw ValidationError("zero_torque", "baseline must be finite and non-zero");
  }
  return 100.0 * (zero_torque - other) / zero_torque;
}

double round_to(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // Nudge by a few ulps so values printed as ...5 round away from zero.
  const double scaled = value * scale;
  const double nudged = scaled + std::copysign(std::abs(scaled) * 4 * std::numeric_limits<double>::epsilon(), scaled);
  return std::round(nudged) / scale;
}

}  // namespace exo::analysis
