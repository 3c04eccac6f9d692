#pragma once

// Offline analysis: Brockway metabolic power, net metabolic rate, per-subject
// condition summaries and squat-cycle kinematics.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exo/common.hpp"

namespace exo::analysis {

/// (0.278 VO2 + 0.075 VCO2) / mass with gas rates in ml/min; W/kg.
double brockway_power(double vo2_ml_min, double vco2_ml_min, double mass_kg);

struct MetabolicSample {
  double t = 0.0;     // s
  double vo2 = 0.0;   // ml/min
  double vco2 = 0.0;  // ml/min
  std::optional<double> hr;  // bpm
};

/// Columns t_s, VO2_ml_min, VCO2_ml_min and optionally HR_bpm (blank cells
/// allowed).
std::vector<MetabolicSample> load_metabolic_csv(const std::filesystem::path& path);
void validate_metabolic(std::span<const MetabolicSample> records);

struct Window {
  double begin = 0.0;  // s, inclusive
  double end = 0.0;    // s, inclusive
};

/// The closed interval covering the final `seconds` of the trial.
Window last_seconds(std::span<const MetabolicSample> records, double seconds);

/// Mean breath-by-breath Brockway power inside `window` minus `resting`.
double net_metabolic_rate(std::span<const MetabolicSample> records, Window window,
                          double resting_w_kg, double mass_kg);

/// Mean gross Brockway power inside `window` (resting baselines).
double gross_metabolic_rate(std::span<const MetabolicSample> records, Window window, double mass_kg);

/// Mean of the heart-rate samples inside `window`; nullopt when none.
std::optional<double> mean_heart_rate(std::span<const MetabolicSample> records, Window window);

/// 100 (zero_torque - other) / zero_torque; positive means a reduction.
double percent_change(double zero_torque, double other);

/// Half-away-from-zero rounding to `decimals` places.
double round_to(double value, int decimals);

enum class Condition { ZeroTorque = 0, NoExo = 1, Assistance = 2 };
inline constexpr std::array<Condition, 3> kConditions{Condition::ZeroTorque, Condition::NoExo,
                                                      Condition::Assistance};
const char* to_string(Condition c);
std::optional<Condition> parse_condition(std::string_view text);

struct ConditionValues {
  std::optional<double> hr;   // bpm
  std::optional<double> nmr;  // W/kg
};

struct SubjectInput {
  std::string id;
  std::optional<double> height;  // m
  std::optional<double> mass;    // kg
  std::array<ConditionValues, 3> conditions;
  bool hr_invalid = false;  // excluded from every HR statistic
};

struct Stat {
  std::size_t n = 0;
  std::optional<double> mean;
  std::optional<double> sd;  // sample SD (n - 1); nullopt for n < 2

  bool empty() const noexcept { return n == 0; }
};

/// Mean and sample standard deviation; an empty input gives an empty Stat.
Stat describe(std::span<const double> values);

struct SubjectChanges {
  std::string id;
  // Per condition, rounded to one decimal; ZeroTorque entries stay empty.
  std::array<std::optional<double>, 3> hr;
  std::array<std::optional<double>, 3> nmr;
};

struct Table1 {
  std::vector<SubjectChanges> subjects;
  Stat height;
  Stat mass;
  std::array<Stat, 3> hr;
  std::array<Stat, 3> nmr;
  // Mean of the rounded per-subject changes over included subjects.
  std::array<std::optional<double>, 3> hr_mean_change;
  std::array<std::optional<double>, 3> nmr_mean_change;
};

/// Missing values drop a subject from that cell; hr_invalid drops it from
/// every HR cell. Throws ValidationError when no subjects are given.
Table1 summarize(std::span<const SubjectInput> subjects);

/// CSV with one row per subject plus "Mean (SD)" and "Mean % change" rows.
void write_table1_csv(const Table1& table, std::span<const SubjectInput> subjects,
                      const std::filesystem::path& path);

struct Cycle {
  std::size_t begin = 0;  // sample index of the opening boundary
  std::size_t end = 0;    // sample index of the closing boundary
};

struct SegmentationConfig {
  double sample_hz = 100.0;
  double smoothing_s = 0.25;
  double standing_below_deg = 10.0;
  double peak_above_deg = 30.0;
};

/// Standing-to-standing squat cycles from a knee angle trace in radians.
std::vector<Cycle> segment_cycles(std::span<const double> knee_rad, const SegmentationConfig& config = {});

/// Centered moving average over `window` samples, shrinking at the edges.
std::vector<double> moving_average(std::span<const double> x, std::size_t window);

/// Linear interpolation of series[begin..end] onto `points` equal steps.
std::vector<double> resample_cycle(std::span<const double> series, Cycle cycle, std::size_t points = 101);

struct CycleCurves {
  std::vector<double> phase;  // percent, 0..100
  std::vector<double> mean;
  std::vector<double> sd;     // population SD across cycles
  std::size_t cycles = 0;
};

/// Pointwise mean and SD of already resampled curves of equal length.
CycleCurves combine_curves(const std::vector<std::vector<double>>& curves);
CycleCurves resample_cycles(std::span<const double> series, std::span<const Cycle> cycles,
                            std::size_t points = 101);

/// Maximum of the mean curve, converted from radians to degrees.
double peak_flexion_deg(const CycleCurves& curves);

}  // namespace exo::analysis
