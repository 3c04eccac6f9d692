#include <zlib.h>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <Eigen/Core>

#include "CLI11.hpp"

#include "exo/analysis.hpp"
#include "exo/cli.hpp"
#include "exo/csv.hpp"

namespace exo::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Context {
  std::string subcommand;
  std::vector<std::string> args;
  fs::path out;
  json config;
  json inputs = json::object();
  json outputs = json::array();
  json results = json::object();
  std::ostream* log = nullptr;
};

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x", v);
  return buf;
}

void record_input(Context& ctx, const std::string& role, const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  ctx.inputs[role] = {{"path", fs::absolute(path).string()}, {"bytes", bytes.size()},
                      {"crc32", hex32(static_cast<std::uint32_t>(crc))}};
}

fs::path output(Context& ctx, const std::string& name) {
  ctx.outputs.push_back(name);
  return ctx.out / name;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

json versions() {
  return {{"exo", kVersion},
          {"compiler", __VERSION__},
          {"cplusplus", __cplusplus},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"zlib", ZLIB_VERSION}};
}

std::string checksum_hex(const ecn::MlpParams& psi) { return hex32(ecn::params_checksum(psi)); }

ecn::MlpParams load_psi(Context& ctx, const std::string& path) {
  record_input(ctx, "psi", path);
  return ecn::load_params(path);
}

cpn::PdGains load_gains(Context& ctx, const std::optional<std::string>& path) {
  if (!path) return gains_from_json(ctx.config.at("cpn").at("initial_gains"));
  record_input(ctx, "gains", *path);
  std::ifstream in(*path);
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw FormatError(*path, "not valid JSON");
  return gains_from_json(j);
}

// ---------------------------------------------------------------- train

void cmd_train(Context& ctx) {
  using clock = std::chrono::steady_clock;
  auto& log = *ctx.log;
  const auto plant = plant_from_config(ctx.config);
  const auto ref = reference_from_config(ctx.config, plant);
  const auto initial = gains_from_json(ctx.config.at("cpn").at("initial_gains"));

  auto t0 = clock::now();
  const auto search = cpn::optimize_gains(initial, plant, ref, search_from_config(ctx.config));
  const double search_s = std::chrono::duration<double>(clock::now() - t0).count();
  log << "gains: objective " << search.initial_objective << " -> " << search.objective << " after "
      << search.evaluations << " rollouts\n";
  json gains = gains_to_json(search.gains);
  gains["objective"] = search.objective;
  gains["initial_objective"] = search.initial_objective;
  gains["evaluations"] = search.evaluations;
  write_json(output(ctx, "gains.json"), gains);

  t0 = clock::now();
  const auto dataset = cpn::generate_dataset(plant, search.gains, ref, dataset_from_config(ctx.config));
  const double dataset_s = std::chrono::duration<double>(clock::now() - t0).count();
  log << "dataset: " << dataset.size() << " samples\n";

  t0 = clock::now();
  const auto trained = ecn::train(dataset, dims_from_config(ctx.config), train_from_config(ctx.config),
                                  loss_weights_from_config(ctx.config));
  const double train_s = std::chrono::duration<double>(clock::now() - t0).count();
  ecn::save_params(trained.params, output(ctx, "ecn.bin"));

  {
    std::ofstream curve(output(ctx, "loss_curve.csv"), std::ios::trunc);
    if (!curve) throw IoError("cannot write loss_curve.csv");
    curve << "epoch,train_loss,validation_loss,validation_data,best_validation_loss\n";
    for (const auto& e : trained.history) {
      curve << e.epoch << ',' << csv::format_double(e.train_loss) << ',' << csv::format_double(e.validation_loss)
            << ',' << csv::format_double(e.validation_data) << ',' << csv::format_double(e.best_validation_loss)
            << '\n';
    }
  }

  double best_data = 0.0;
  double best_loss = 0.0;
  for (const auto& e : trained.history) {
    if (e.epoch == trained.best_epoch) {
      best_data = e.validation_data;
      best_loss = e.validation_loss;
    }
  }
  json trace = json::array();
  for (const auto& g : search.trace) {
    trace.push_back({{"generation", g.generation}, {"evaluations", g.evaluations}, {"objective", g.best_objective}});
  }
  const json report = {
      {"gains", gains},
      {"gain_trace", trace},
      {"dataset_size", dataset.size()},
      {"train_size", trained.train_size},
      {"validation_size", trained.validation_size},
      {"epochs", trained.history.size()},
      {"best_epoch", trained.best_epoch},
      {"best_validation_loss", best_loss},
      {"best_validation_data", best_data},
      {"parameter_count", trained.params.parameter_count()},
      {"psi_crc32", checksum_hex(trained.params)},
  };
  write_json(output(ctx, "train_report.json"), report);
  ctx.results = report;
  ctx.results["elapsed_s"] = {{"gain_search", search_s}, {"dataset", dataset_s}, {"training", train_s}};
  log << "ecn: " << trained.history.size() << " epochs, best " << trained.best_epoch << ", validation data term "
      << best_data << ", crc32 " << checksum_hex(trained.params) << '\n';
}

// ---------------------------------------------------------------- simulate

bool parse_assist_condition(const std::string& text) {
  if (text == "zero" || text == "ZeroTorque" || text == "zero_torque") return false;
  if (text == "assist" || text == "Assist" || text == "Assistance" || text == "assistance") return true;
  throw UsageError("--condition must be zero or assist, got '" + text + "'");
}

void cmd_simulate(Context& ctx, const std::optional<std::string>& psi_path, const std::string& condition,
                  std::optional<int> cycles_flag, const std::optional<std::string>& gains_path) {
  const bool assist = parse_assist_condition(condition);
  const int cycles = cycles_flag ? *cycles_flag : ctx.config.at("simulate").at("cycles").get<int>();
  if (cycles < 1) throw ValidationError("cycles", "must be >= 1");
  if (assist && !psi_path) throw UsageError("simulate --condition assist requires --psi");

  std::optional<ecn::MlpParams> psi;
  if (assist) psi = load_psi(ctx, *psi_path);
  const auto gains = load_gains(ctx, gains_path);
  const auto plant = plant_from_config(ctx.config);
  const auto ref = reference_from_config(ctx.config, plant);
  const auto muscles = cpn::muscles_for_reference(ref, plant);

  cpn::RolloutOptions opt;
  opt.cycles = cycles;
  opt.ecn = psi ? &*psi : nullptr;
  opt.tau_max = ctx.config.at("simulate").at("tau_max").get<double>();
  opt.assist_scale = ctx.config.at("simulate").at("assist_scale").get<double>();
  opt.muscles = &muscles;
  opt.noise.angle_sigma = ctx.config.at("simulate").at("angle_sigma").get<double>();
  opt.noise.seed = ctx.config.at("seed").get<std::uint64_t>();
  const auto log = cpn::rollout(plant, gains, ref, opt);

  {
    std::ofstream out(output(ctx, "rollout.csv"), std::ios::trunc);
    if (!out) throw IoError("cannot write rollout.csv");
    out << "t_s,phase";
    for (const char* p : {"q_", "qdot_", "tau_human_"}) {
      for (const char* c : {"ankle", "knee", "hip"}) out << ',' << p << c;
    }
    for (const char* j : kJointNames) out << ",tau_exo_" << j;
    out << ",muscle_feasible";
    for (const auto& m : muscles) out << ",a_" << m.name;
    out << '\n';
    std::string line;
    for (const auto& t : log.ticks) {
      line = csv::format_double(t.t) + ',' + csv::format_double(t.phase);
      for (const auto* v : {&t.q, &t.qdot, &t.human_torque}) {
        for (int c = 0; c < 3; ++c) line += ',' + csv::format_double((*v)[c]);
      }
      for (double x : t.exo_torque) line += ',' + csv::format_double(x);
      line += t.muscle_feasible ? ",1" : ",0";
      for (double a : t.activations) line += ',' + csv::format_double(a);
      out << line << '\n';
    }
    if (!out) throw IoError("write failed: rollout.csv");
  }

  std::size_t infeasible = 0;
  double exo_peak = 0.0;
  for (const auto& t : log.ticks) {
    infeasible += t.muscle_feasible ? 0 : 1;
    for (double x : t.exo_torque) exo_peak = std::max(exo_peak, std::abs(x));
  }
  const json report = {
      {"condition", assist ? "assist" : "zero"},
      {"cycles", cycles},
      {"ticks", log.ticks.size()},
      {"effort", cpn::rollout_effort(log)},
      {"human_torque_rms", cpn::human_torque_rms(log)},
      {"motion_match_reward", cpn::motion_match_reward(log, ref)},
      {"max_abs_exo_torque", exo_peak},
      {"infeasible_ticks", infeasible},
      {"gains", gains_to_json(gains)},
  };
  write_json(output(ctx, "effort_report.json"), report);
  ctx.results = report;
  *ctx.log << "simulate " << report["condition"].get<std::string>() << ": effort " << report["effort"].get<double>()
           << ", human torque rms " << report["human_torque_rms"].get<double>() << " N m, reward "
           << report["motion_match_reward"].get<double>() << '\n';
}

// ---------------------------------------------------------------- serve

std::atomic<runtime::Session*> g_session{nullptr};

extern "C" void on_interrupt(int) {
  if (auto* s = g_session.load()) s->request_stop();
}

json summary_json(const runtime::SessionSummary& s) {
  return {{"ticks", s.ticks},
          {"missed_deadlines", s.missed_deadlines},
          {"final_mode", std::string(runtime::to_string(s.final_mode))},
          {"faults", s.faults},
          {"commands", s.commands},
          {"rejected_samples", s.rejected_samples},
          {"max_abs_torque", s.max_abs_torque},
          {"max_torque_step", s.max_torque_step}};
}

runtime::SessionConfig session_from_config(const json& config) {
  runtime::SessionConfig sc;
  sc.limits = limits_from_config(config);
  const auto& rt = config.at("runtime");
  const auto mode = runtime::parse_mode(rt.at("initial_mode").get<std::string>());
  if (!mode) throw ValidationError("/runtime/initial_mode", "unknown mode");
  sc.initial_mode = *mode;
  sc.initial_scale = rt.at("initial_scale").get<double>();
  const auto offsets = rt.at("angle_offsets").get<std::vector<double>>();
  if (offsets.size() != kJointCount) throw ValidationError("/runtime/angle_offsets", "expected 4 values");
  std::copy(offsets.begin(), offsets.end(), sc.angle_offsets.begin());
  return sc;
}

void cmd_serve(Context& ctx, const std::string& psi_path, std::optional<double> duration_flag,
               const std::optional<std::string>& gains_path) {
  auto psi = load_psi(ctx, psi_path);
  const auto gains = load_gains(ctx, gains_path);
  const auto plant = plant_from_config(ctx.config);
  const auto ref = reference_from_config(ctx.config, plant);
  const double duration = duration_flag ? *duration_flag : ctx.config.at("runtime").at("duration_s").get<double>();
  if (duration < 0.0) throw ValidationError("duration", "must be >= 0");
  const bool telemetry_on = ctx.config.at("telemetry").at("enabled").get<bool>();

  runtime::SessionConfig sc = session_from_config(ctx.config);
  sc.max_ticks = static_cast<std::int64_t>(std::llround(duration * 1000.0 / runtime::kTickMs));
  sc.realtime = true;
  sc.watchdog = telemetry_on;
  sc.log_path = output(ctx, "session_log.csv");
  sc.events_path = output(ctx, "session_events.csv");

  auto subject = std::make_unique<runtime::SimulatedSubject>(
      plant, gains, ref, ctx.config.at("runtime").at("subject_angle_sigma").get<double>(),
      ctx.config.at("seed").get<std::uint64_t>());
  runtime::Session session(sc, std::move(psi), std::move(subject));

  std::unique_ptr<telemetry::TelemetryServer> server;
  if (telemetry_on) {
    server = std::make_unique<telemetry::TelemetryServer>(
        server_from_config(ctx.config), [&session](const telemetry::CommandPacket& c) { session.post_command(c); });
    server->start();
    session.attach_telemetry(server.get());
    *ctx.log << "serving: udp commands on " << server->command_port();
    if (server->bridge_port() != 0) *ctx.log << ", bridge http://127.0.0.1:" << server->bridge_port();
    *ctx.log << std::endl;
  }

  g_session = &session;
  auto old_int = std::signal(SIGINT, on_interrupt);
  auto old_term = std::signal(SIGTERM, on_interrupt);
  runtime::SessionSummary summary;
  try {
    summary = session.run();
  } catch (...) {
    g_session = nullptr;
    std::signal(SIGINT, old_int);
    std::signal(SIGTERM, old_term);
    throw;
  }
  g_session = nullptr;
  std::signal(SIGINT, old_int);
  std::signal(SIGTERM, old_term);

  json report = summary_json(summary);
  if (server) {
    server->stop();
    const auto st = server->stats();
    report["telemetry"] = {{"commands", st.commands},
                           {"malformed", st.malformed},
                           {"states_sent", st.states_sent},
                           {"bridge_lines", st.bridge_lines}};
  }
  write_json(output(ctx, "session_summary.json"), report);
  ctx.results = report;
  *ctx.log << "session ended after " << summary.ticks << " ticks, " << summary.missed_deadlines
           << " missed deadlines, final mode " << runtime::to_string(summary.final_mode) << '\n';
}

// ---------------------------------------------------------------- replay

std::vector<std::array<std::string, kJointCount>> torque_columns(const fs::path& path) {
  const csv::Table t = csv::read(path);
  std::array<std::size_t, kJointCount> cols{};
  for (std::size_t j = 0; j < kJointCount; ++j) {
    const std::string name = std::string("tau_") + kJointNames[j];
    if (!t.has_column(name)) return {};
    cols[j] = t.column(name);
  }
  std::vector<std::array<std::string, kJointCount>> out;
  for (const auto& row : t.rows) {
    std::array<std::string, kJointCount> r;
    for (std::size_t j = 0; j < kJointCount; ++j) r[j] = row[cols[j]];
    out.push_back(r);
  }
  return out;
}

void cmd_replay(Context& ctx, const std::string& log_path, const std::string& psi_path) {
  record_input(ctx, "log", log_path);
  auto source = std::make_unique<runtime::ReplaySource>(log_path);
  auto psi = load_psi(ctx, psi_path);
  runtime::SessionConfig sc = session_from_config(ctx.config);
  sc.max_ticks = 0;
  sc.realtime = false;
  sc.watchdog = false;
  sc.log_path = output(ctx, "replay_log.csv");
  sc.events_path = output(ctx, "replay_events.csv");
  runtime::Session session(sc, std::move(psi), std::move(source));
  const auto summary = session.run();

  const auto original = torque_columns(log_path);
  const auto replayed = torque_columns(sc.log_path);
  std::size_t mismatched = 0;
  double max_diff = 0.0;
  const std::size_t compared = original.empty() ? 0 : std::min(original.size(), replayed.size());
  for (std::size_t r = 0; r < compared; ++r) {
    bool same = true;
    for (std::size_t j = 0; j < kJointCount; ++j) {
      const double a = csv::parse_double(original[r][j], "tau");
      const double b = csv::parse_double(replayed[r][j], "tau");
      if (a != b) same = false;
      max_diff = std::max(max_diff, std::abs(a - b));
    }
    mismatched += same ? 0 : 1;
  }
  json report = summary_json(summary);
  report["compared_rows"] = compared;
  report["mismatched_rows"] = mismatched;
  report["max_abs_difference"] = max_diff;
  report["bit_exact"] = compared > 0 && mismatched == 0 && original.size() == replayed.size();
  write_json(output(ctx, "replay_report.json"), report);
  ctx.results = report;
  *ctx.log << "replayed " << summary.ticks << " ticks";
  if (compared) *ctx.log << ", " << mismatched << " rows differ from the source log";
  *ctx.log << '\n';
}

// ---------------------------------------------------------------- analyze

struct Kinematics {
  std::vector<double> knee;
  std::vector<double> hip;
};

Kinematics load_kinematics(const fs::path& path) {
  const csv::Table t = csv::read(path);
  std::size_t knee_col = 0;
  std::size_t hip_col = 0;
  if (t.has_column("angle_kneeL")) {
    knee_col = t.column("angle_kneeL");
    hip_col = t.column("angle_hipL");
  } else if (t.has_column("q_knee")) {
    knee_col = t.column("q_knee");
    hip_col = t.column("q_hip");
  } else {
    throw FormatError(path.string(), "no angle_kneeL or q_knee column");
  }
  Kinematics k;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    try {
      k.knee.push_back(csv::parse_double(t.rows[r][knee_col], "knee"));
      k.hip.push_back(csv::parse_double(t.rows[r][hip_col], "hip"));
    } catch (const FormatError& e) {
      throw FormatError(path.string() + " line " + std::to_string(t.line_numbers[r]), e.what());
    }
  }
  return k;
}

std::optional<double> opt_number(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_number()) throw ValidationError(key, "must be a number");
  return j.at(key).get<double>();
}

void cmd_analyze(Context& ctx, const std::string& manifest_path) {
  record_input(ctx, "manifest", manifest_path);
  std::ifstream in(manifest_path);
  const json manifest = json::parse(in, nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object()) {
    throw ValidationError("manifest", manifest_path + " is not a JSON object");
  }
  if (!manifest.contains("subjects") || !manifest.at("subjects").is_array() || manifest.at("subjects").empty()) {
    throw ValidationError("manifest", "no subjects");
  }
  const fs::path base = fs::path(manifest_path).parent_path();
  const auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  const auto& acfg = ctx.config.at("analysis");
  const double window_s = manifest.value("window_s", acfg.at("window_s").get<double>());
  const double default_resting = manifest.value("resting_w_kg", acfg.at("resting_w_kg").get<double>());
  analysis::SegmentationConfig seg;
  seg.sample_hz = manifest.value("sample_hz", acfg.at("sample_hz").get<double>());

  std::vector<analysis::SubjectInput> subjects;
  std::array<std::vector<std::vector<double>>, 3> knee_curves, hip_curves;
  for (const auto& s : manifest.at("subjects")) {
    analysis::SubjectInput in;
    in.id = s.contains("id") ? (s.at("id").is_string() ? s.at("id").get<std::string>() : s.at("id").dump())
                             : std::to_string(subjects.size() + 1);
    const std::string who = "subject " + in.id;
    try {
      in.height = opt_number(s, "height_m");
      in.mass = opt_number(s, "mass_kg");
      in.hr_invalid = s.value("hr_invalid", false);
      double resting = s.value("resting_w_kg", default_resting);
      if (s.contains("resting_metabolic")) {
        if (!in.mass) throw ValidationError("mass_kg", "needed for metabolic files");
        const auto path = resolve(s.at("resting_metabolic").get<std::string>());
        const auto rec = analysis::load_metabolic_csv(path);
        resting = analysis::gross_metabolic_rate(rec, analysis::last_seconds(rec, window_s), *in.mass);
      }
      const json conds = s.value("conditions", json::object());
      for (auto it = conds.begin(); it != conds.end(); ++it) {
        const auto cond = analysis::parse_condition(it.key());
        if (!cond) throw ValidationError(it.key(), "unknown condition");
        const auto c = static_cast<std::size_t>(*cond);
        const json& v = it.value();
        auto& out = in.conditions[c];
        if (v.contains("metabolic")) {
          if (!in.mass) throw ValidationError("mass_kg", "needed for metabolic files");
          const auto path = resolve(v.at("metabolic").get<std::string>());
          const auto rec = analysis::load_metabolic_csv(path);
          const auto w = analysis::last_seconds(rec, window_s);
          out.nmr = analysis::net_metabolic_rate(rec, w, resting, *in.mass);
          out.hr = analysis::mean_heart_rate(rec, w);
        }
        if (auto hr = opt_number(v, "hr")) out.hr = hr;
        if (auto nmr = opt_number(v, "nmr")) out.nmr = nmr;
        if (v.contains("kinematics")) {
          const auto k = load_kinematics(resolve(v.at("kinematics").get<std::string>()));
          const auto cycles = analysis::segment_cycles(k.knee, seg);
          for (const auto& cyc : cycles) {
            knee_curves[c].push_back(analysis::resample_cycle(k.knee, cyc));
            hip_curves[c].push_back(analysis::resample_cycle(k.hip, cyc));
          }
        }
      }
    } catch (const ValidationError& e) {
      throw ValidationError(who, e.what());
    } catch (const json::exception& e) {
      throw ValidationError(who, e.what());
    }
    subjects.push_back(std::move(in));
  }

  const auto table = analysis::summarize(subjects);
  analysis::write_table1_csv(table, subjects, output(ctx, "table1.csv"));

  json curves_summary = json::object();
  bool any_curves = false;
  for (const auto& v : knee_curves) any_curves = any_curves || !v.empty();
  if (any_curves) {
    std::array<std::optional<analysis::CycleCurves>, 3> knee, hip;
    for (std::size_t c = 0; c < 3; ++c) {
      if (knee_curves[c].empty()) continue;
      knee[c] = analysis::combine_curves(knee_curves[c]);
      hip[c] = analysis::combine_curves(hip_curves[c]);
      curves_summary[analysis::to_string(static_cast<analysis::Condition>(c))] = {
          {"cycles", knee[c]->cycles},
          {"peak_knee_deg", analysis::peak_flexion_deg(*knee[c])},
          {"peak_hip_deg", analysis::peak_flexion_deg(*hip[c])}};
    }
    std::ofstream out(output(ctx, "curves.csv"), std::ios::trunc);
    if (!out) throw IoError("cannot write curves.csv");
    out << "phase_pct";
    for (std::size_t c = 0; c < 3; ++c) {
      if (!knee[c]) continue;
      const std::string n = analysis::to_string(static_cast<analysis::Condition>(c));
      out << ',' << n << "_knee_mean_deg," << n << "_knee_sd_deg," << n << "_hip_mean_deg," << n << "_hip_sd_deg";
    }
    out << '\n';
    for (std::size_t k = 0; k < 101; ++k) {
      out << k;
      for (std::size_t c = 0; c < 3; ++c) {
        if (!knee[c]) continue;
        out << ',' << csv::format_double(rad2deg(knee[c]->mean[k])) << ','
            << csv::format_double(rad2deg(knee[c]->sd[k])) << ',' << csv::format_double(rad2deg(hip[c]->mean[k]))
            << ',' << csv::format_double(rad2deg(hip[c]->sd[k]));
      }
      out << '\n';
    }
  }

  const auto stat = [](const analysis::Stat& s) {
    return json{{"n", s.n}, {"mean", s.mean ? json(*s.mean) : json()}, {"sd", s.sd ? json(*s.sd) : json()}};
  };
  json result = {{"subjects", subjects.size()}, {"height_m", stat(table.height)}, {"mass_kg", stat(table.mass)}};
  for (std::size_t c = 0; c < 3; ++c) {
    const std::string n = analysis::to_string(static_cast<analysis::Condition>(c));
    result["hr"][n] = stat(table.hr[c]);
    result["nmr"][n] = stat(table.nmr[c]);
    if (c) {
      result["hr_mean_change_pct"][n] = table.hr_mean_change[c] ? json(*table.hr_mean_change[c]) : json();
      result["nmr_mean_change_pct"][n] = table.nmr_mean_change[c] ? json(*table.nmr_mean_change[c]) : json();
    }
  }
  if (any_curves) result["kinematics"] = curves_summary;
  write_json(output(ctx, "analysis.json"), result);
  ctx.results = result;

  std::ifstream table_in(ctx.out / "table1.csv");
  *ctx.log << table_in.rdbuf();
}

void write_manifest(const Context& ctx, int code, const std::string& error) {
  if (ctx.out.empty()) return;
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  json m = {{"subcommand", ctx.subcommand},
            {"arguments", ctx.args},
            {"exit_code", code},
            {"versions", versions()},
            {"config", ctx.config},
            {"inputs", ctx.inputs},
            {"outputs", ctx.outputs},
            {"results", ctx.results}};
  if (!error.empty()) m["error"] = error;
  std::ofstream out(ctx.out / "manifest.json", std::ios::trunc);
  if (out) out << m.dump(2) << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Squat exoskeleton controller: training, simulation, live serving, replay and analysis", "exo"};
  app.fallthrough();
  app.require_subcommand(1);
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--seed", seed, "random seed (default 42)");
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--set", overrides, "override a configuration value, key=value")->take_all();
  app.set_version_flag("--version", kVersion);

  auto* train = app.add_subcommand("train", "tune tracking gains, build the dataset and train the network");
  auto* simulate = app.add_subcommand("simulate", "closed-loop squat rollout with or without assistance");
  auto* serve = app.add_subcommand("serve", "run the 100 Hz controller with telemetry until interrupted");
  auto* replay = app.add_subcommand("replay", "re-run the controller over a logged session");
  auto* analyze = app.add_subcommand("analyze", "summarize metabolic and kinematic results");

  std::optional<std::string> psi, gains;
  std::string condition, log_path, manifest_path;
  std::optional<int> cycles;
  std::optional<double> duration;
  simulate->add_option("--psi", psi, "trained network (ECN1 file)");
  simulate->add_option("--condition", condition, "zero or assist")->required();
  simulate->add_option("--cycles", cycles, "squat cycles");
  simulate->add_option("--gains", gains, "gains.json from train");
  serve->add_option("--psi", psi, "trained network (ECN1 file)")->required();
  serve->add_option("--duration", duration, "seconds to run, 0 until interrupted");
  serve->add_option("--gains", gains, "gains.json from train");
  replay->add_option("--log", log_path, "session log or angle file")->required();
  replay->add_option("--psi", psi, "trained network (ECN1 file)")->required();
  analyze->add_option("--manifest", manifest_path, "subjects manifest")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  Context ctx;
  ctx.args = args;
  ctx.log = &out;
  ctx.subcommand = app.get_subcommands().front()->get_name();
  ctx.out = out_dir;
  int code = kExitOk;
  std::string message;
  try {
    if (ctx.subcommand == "train" && !config_path) throw UsageError("train requires --config");
    ctx.config = resolve_config(config_path ? std::optional<fs::path>(*config_path) : std::nullopt, overrides, seed);
    if (config_path) record_input(ctx, "config", *config_path);
    fs::create_directories(ctx.out);
    if (train->parsed()) cmd_train(ctx);
    if (simulate->parsed()) cmd_simulate(ctx, psi, condition, cycles, gains);
    if (serve->parsed()) cmd_serve(ctx, *psi, duration, gains);
    if (replay->parsed()) cmd_replay(ctx, log_path, *psi);
    if (analyze->parsed()) cmd_analyze(ctx, manifest_path);
  } catch (const UsageError& e) {
    code = kExitUsage;
    message = e.what();
  } catch (const ValidationError& e) {
    code = kExitConfig;
    message = e.what();
  } catch (const nlohmann::json::exception& e) {
    code = kExitConfig;
    message = e.what();
  } catch (const FormatError& e) {
    code = kExitIo;
    message = e.what();
  } catch (const IoError& e) {
    code = kExitIo;
    message = e.what();
  } catch (const fs::filesystem_error& e) {
    code = kExitIo;
    message = e.what();
  } catch (const NumericalError& e) {
    code = kExitNumerical;
    message = e.what();
  }
  if (code != kExitOk) err << "exo " << ctx.subcommand << ": " << message << '\n';
  if (code != kExitUsage) write_manifest(ctx, code, message);
  return code;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace exo::cli
