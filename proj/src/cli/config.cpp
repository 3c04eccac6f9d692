#include <fstream>

#include "exo/cli.hpp"

namespace exo::cli {

using nlohmann::json;

json default_config() {
  return json::parse(R"({
  "seed": 42,
  "subject": {"height_m": 1.73, "mass_kg": 86.0},
  "reference": {"period_s": 4.0, "knee_peak_deg": 120.0, "hip_peak_deg": 95.0, "samples": 201},
  "cpn": {
    "initial_gains": {"kp": [1000.0, 500.0, 250.0], "kd": [50.0, 25.0, 12.5]},
    "search": {"budget": 200, "offspring": 8, "sigma": 0.2, "cycles_per_scale": 3,
               "scales": [0.8, 0.9, 1.0, 1.1, 1.2]}
  },
  "dataset": {"cycles": 10, "angle_sigma": 0.01, "torque_norm": 10.0,
              "scales": [0.8, 0.9, 1.0, 1.1, 1.2]},
  "ecn": {"dims": [80, 64, 64, 64, 4], "learning_rate": 0.001, "batch_size": 256,
          "max_epochs": 500, "patience": 10, "min_improvement": 1e-5,
          "validation_fraction": 0.1, "w_reg": 0.01, "w_symm": 1.0},
  "simulate": {"cycles": 3, "tau_max": 10.0, "assist_scale": 1.0, "angle_sigma": 0.0},
  "runtime": {"tau_max": 10.0, "rate_limit": 2.0, "watchdog_timeout_ms": 500,
              "initial_mode": "ZeroTorque", "initial_scale": 1.0,
              "angle_offsets": [0.0, 0.0, 0.0, 0.0], "subject_angle_sigma": 0.002,
              "duration_s": 0},
  "telemetry": {"enabled": true, "bind_address": "127.0.0.1", "command_port": 45001,
                "stream_port": 45002, "bridge_enabled": true, "bridge_port": 45080,
                "stream_decimation": 2, "stream_targets": []},
  "analysis": {"window_s": 120.0, "resting_w_kg": 1.71, "sample_hz": 100.0}
})");
}

namespace {

json::json_pointer to_pointer(const std::string& key) {
  if (key.empty()) throw UsageError("--set: empty key");
  if (key.front() == '/') return json::json_pointer(key);
  std::string ptr;
  for (char c : key) ptr += c == '.' ? '/' : c;
  return json::json_pointer("/" + ptr);
}

template <class T>
T get(const json& config, const char* pointer) {
  const json::json_pointer p(pointer);
  if (!config.contains(p)) throw ValidationError(pointer, "missing from configuration");
  try {
    return config.at(p).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(pointer, std::string("wrong type: ") + e.what());
  }
}

dynamics::Triple triple(const json& config, const char* pointer) {
  const auto v = get<std::vector<double>>(config, pointer);
  if (v.size() != 3) throw ValidationError(pointer, "expected 3 values (ankle, knee, hip)");
  return {v[0], v[1], v[2]};
}

std::uint16_t port(const json& config, const char* pointer) {
  const auto v = get<std::int64_t>(config, pointer);
  if (v < 0 || v > 65535) throw ValidationError(pointer, "port out of range");
  return static_cast<std::uint16_t>(v);
}

}  // namespace

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + assignment + "'");
  const auto ptr = to_pointer(assignment.substr(0, eq));
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  try {
    config[ptr] = std::move(value);
  } catch (const json::exception& e) {
    throw UsageError("--set " + assignment + ": " + e.what());
  }
}

json resolve_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides,
                    std::optional<std::uint64_t> seed) {
  json config = default_config();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw IoError("cannot read config " + file->string());
    json user = json::parse(in, nullptr, false, true);
    if (user.is_discarded() || !user.is_object()) {
      throw ValidationError("--config", file->string() + " is not a JSON object");
    }
    config.merge_patch(user);
  }
  for (const auto& o : overrides) apply_override(config, o);
  if (seed) config["seed"] = *seed;
  get<std::uint64_t>(config, "/seed");
  return config;
}

dynamics::Plant plant_from_config(const json& config) {
  dynamics::Plant plant{dynamics::anthropometric_scale(get<double>(config, "/subject/height_m"),
                                                       get<double>(config, "/subject/mass_kg"))};
  plant.body.validate();
  return plant;
}

dynamics::SquatReference reference_from_config(const json& config, const dynamics::Plant& plant) {
  dynamics::SquatDepth depth;
  depth.knee_peak = deg2rad(get<double>(config, "/reference/knee_peak_deg"));
  depth.hip_peak = deg2rad(get<double>(config, "/reference/hip_peak_deg"));
  return dynamics::generate_reference(depth, get<double>(config, "/reference/period_s"),
                                      get<int>(config, "/reference/samples"), plant.body);
}

cpn::PdGains gains_from_json(const json& j) {
  cpn::PdGains g;
  g.kp = triple(j, "/kp");
  g.kd = triple(j, "/kd");
  g.validate();
  return g;
}

json gains_to_json(const cpn::PdGains& gains) {
  return {{"kp", {gains.kp[0], gains.kp[1], gains.kp[2]}}, {"kd", {gains.kd[0], gains.kd[1], gains.kd[2]}}};
}

cpn::GainSearchConfig search_from_config(const json& config) {
  cpn::GainSearchConfig c;
  c.budget = get<int>(config, "/cpn/search/budget");
  c.offspring = get<int>(config, "/cpn/search/offspring");
  c.sigma = get<double>(config, "/cpn/search/sigma");
  c.cycles_per_scale = get<int>(config, "/cpn/search/cycles_per_scale");
  c.scales = get<std::vector<double>>(config, "/cpn/search/scales");
  c.seed = get<std::uint64_t>(config, "/seed");
  return c;
}

cpn::DatasetConfig dataset_from_config(const json& config) {
  cpn::DatasetConfig c;
  c.cycles = get<int>(config, "/dataset/cycles");
  c.angle_sigma = get<double>(config, "/dataset/angle_sigma");
  c.torque_norm = get<double>(config, "/dataset/torque_norm");
  c.scales = get<std::vector<double>>(config, "/dataset/scales");
  c.seed = get<std::uint64_t>(config, "/seed");
  return c;
}

ecn::TrainConfig train_from_config(const json& config) {
  ecn::TrainConfig c;
  c.learning_rate = get<double>(config, "/ecn/learning_rate");
  c.batch_size = get<std::size_t>(config, "/ecn/batch_size");
  c.max_epochs = get<int>(config, "/ecn/max_epochs");
  c.patience = get<int>(config, "/ecn/patience");
  c.min_improvement = get<double>(config, "/ecn/min_improvement");
  c.validation_fraction = get<double>(config, "/ecn/validation_fraction");
  c.seed = get<std::uint64_t>(config, "/seed");
  return c;
}

ecn::LossWeights loss_weights_from_config(const json& config) {
  return {get<double>(config, "/ecn/w_reg"), get<double>(config, "/ecn/w_symm")};
}

std::vector<int> dims_from_config(const json& config) { return get<std::vector<int>>(config, "/ecn/dims"); }

runtime::SafetyLimits limits_from_config(const json& config) {
  runtime::SafetyLimits l;
  l.tau_max = get<double>(config, "/runtime/tau_max");
  l.rate_limit = get<double>(config, "/runtime/rate_limit");
  l.watchdog_timeout_ms = get<std::int64_t>(config, "/runtime/watchdog_timeout_ms");
  l.validate();
  return l;
}

telemetry::ServerConfig server_from_config(const json& config) {
  telemetry::ServerConfig s;
  s.bind_address = get<std::string>(config, "/telemetry/bind_address");
  s.command_port = port(config, "/telemetry/command_port");
  s.stream_port = port(config, "/telemetry/stream_port");
  s.bridge_enabled = get<bool>(config, "/telemetry/bridge_enabled");
  s.bridge_port = port(config, "/telemetry/bridge_port");
  s.stream_decimation = get<int>(config, "/telemetry/stream_decimation");
  s.stream_targets = get<std::vector<std::string>>(config, "/telemetry/stream_targets");
  return s;
}

}  // namespace exo::cli
