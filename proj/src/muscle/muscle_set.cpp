#include <fstream>

#include "exo/muscle.hpp"

namespace exo::muscle {

namespace {

const char* joint_name(Coord c) {
  switch (c) {
    case dynamics::kAnkle: return "ankle";
    case dynamics::kKnee: return "knee";
    case dynamics::kHip: return "hip";
  }
  return "?";
}

Coord joint_from_name(const std::string& s) {
  if (s == "ankle") return dynamics::kAnkle;
  if (s == "knee") return dynamics::kKnee;
  if (s == "hip") return dynamics::kHip;
  throw FormatError("joint", "unknown joint '" + s + "'");
}

}  // namespace

std::vector<MuscleParams> default_muscle_set(double peak_hip_extension,
                                             double peak_knee_extension,
                                             const Triple& ref_pose) {
  if (!(peak_hip_extension > 0.0)) throw ValidationError("peak_hip_extension", "must be positive");
  if (!(peak_knee_extension > 0.0)) throw ValidationError("peak_knee_extension", "must be positive");
  const double hip_cap = 3.0 * peak_hip_extension;
  const double knee_cap = 3.0 * peak_knee_extension;
  const double hip = ref_pose[dynamics::kHip];
  const double knee = ref_pose[dynamics::kKnee];
  auto arm = [](Coord j, double r, double ref) { return MomentArm{j, r, ref}; };

  // Extensor capacity: hip 60/40 gluteals/hamstrings, knee 75/25 vasti/rectus.
  std::vector<MuscleParams> set = {
      {"gluteals", 0.60 * hip_cap / 0.06, 0.20, 2.0, {arm(dynamics::kHip, 0.06, hip)}},
      {"iliopsoas", 1.0 * peak_hip_extension / 0.05, 0.15, 1.5, {arm(dynamics::kHip, -0.05, hip)}},
      {"vasti", 0.75 * knee_cap / 0.045, 0.15, 1.5, {arm(dynamics::kKnee, -0.045, knee)}},
      {"hamstrings", 0.40 * hip_cap / 0.055, 0.20, 2.0,
       {arm(dynamics::kHip, 0.055, hip), arm(dynamics::kKnee, 0.03, knee)}},
      {"rectus_femoris", 0.25 * knee_cap / 0.045, 0.15, 1.5,
       {arm(dynamics::kHip, -0.04, hip), arm(dynamics::kKnee, -0.045, knee)}},
      {"gastrocnemius", 1.0 * peak_knee_extension / 0.025, 0.10, 1.0,
       {arm(dynamics::kKnee, 0.025, knee)}},
  };
  for (const auto& m : set) m.validate();
  return set;
}

nlohmann::json muscle_set_to_json(std::span<const MuscleParams> muscles) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& m : muscles) {
    nlohmann::json arms = nlohmann::json::array();
    for (const auto& a : m.arms) {
      arms.push_back({{"joint", joint_name(a.joint)}, {"arm", a.arm}, {"ref_angle", a.ref_angle}});
    }
    out.push_back({{"name", m.name},
                   {"F0", m.max_isometric_force},
                   {"l0", m.optimal_fiber_length},
                   {"v_max", m.max_shortening_velocity},
                   {"moment_arms", arms}});
  }
  return out;
}

std::vector<MuscleParams> muscle_set_from_json(const nlohmann::json& j) {
  const nlohmann::json& list = j.is_object() && j.contains("muscles") ? j.at("muscles") : j;
  if (!list.is_array()) throw FormatError("muscles", "expected an array");
  std::vector<MuscleParams> out;
  for (const auto& item : list) {
    MuscleParams m;
    try {
      m.name = item.at("name").get<std::string>();
      m.max_isometric_force = item.at("F0").get<double>();
      m.optimal_fiber_length = item.at("l0").get<double>();
      m.max_shortening_velocity = item.at("v_max").get<double>();
      for (const auto& a : item.at("moment_arms")) {
        m.arms.push_back({joint_from_name(a.at("joint").get<std::string>()), a.at("arm").get<double>(),
                          a.value("ref_angle", 0.0)});
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("muscles", e.what());
    }
    m.validate();
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<MuscleParams> load_muscle_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string(), e.what());
  }
  return muscle_set_from_json(j);
}

}  // namespace exo::muscle
