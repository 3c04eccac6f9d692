// One PASS/FAIL line per primary acceptance criterion. Exit status is the
// number of failed criteria.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "exo/analysis.hpp"
#include "exo/cli.hpp"
#include "exo/csv.hpp"
#include "exo/dynamics.hpp"
#include "exo/ecn.hpp"
#include "exo/reference.hpp"
#include "exo/session.hpp"
#include "exo/telemetry.hpp"
#include "exo/telemetry_server.hpp"

using namespace exo;
using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failures; the first few are kept for the report line.
class Checker {
 public:
  void check(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) notes_ << (failures_ > 1 ? "; " : "") << what;
  }
  void note(const std::string& s) { info_ << (info_.tellp() > 0 ? ", " : "") << s; }
  Outcome outcome() const {
    Outcome o;
    o.pass = failures_ == 0;
    o.detail = info_.str();
    if (failures_) o.detail += (o.detail.empty() ? "" : " | ") + std::to_string(failures_) + " failed: " + notes_.str();
    return o;
  }

 private:
  int failures_ = 0;
  std::ostringstream notes_;
  std::ostringstream info_;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

fs::path work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("exo_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

int exo(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

// ------------------------------------------------------------------ table

Outcome table_reproduction() {
  using namespace analysis;
  constexpr std::size_t ZT = 0, NE = 1, AS = 2;
  const auto subject = [](std::string id, double h, double m, std::array<std::optional<double>, 3> hr,
                          std::array<std::optional<double>, 3> nmr, bool hr_invalid = false) {
    SubjectInput s;
    s.id = std::move(id);
    s.height = h;
    s.mass = m;
    for (std::size_t c = 0; c < 3; ++c) s.conditions[c] = {hr[c], nmr[c]};
    s.hr_invalid = hr_invalid;
    return s;
  };
  const std::vector<SubjectInput> subjects = {
      subject("1", 1.78, 94.0, {146.0, 145.6, 139.2}, {4.106, 4.773, 3.705}),
      subject("2", 1.84, 98.3, {115.0, 112.6, 110.7}, {4.303, 4.571, 3.382}),
      subject("3", 1.80, 102.3, {118.2, 109.8, 123.7}, {3.451, 3.060, 3.453}),
      subject("4", 1.52, 73.0, {79.1, 79.4, 86.1}, {3.813, 3.670, 3.476}, true),
      subject("5", 1.70, 64.65, {118.7, 113.6, std::nullopt}, {5.259, 4.279, std::nullopt}),
  };
  // Printed brackets; nullopt where the sheet leaves the cell empty.
  const std::optional<double> none;
  const std::array<std::array<std::optional<double>, 3>, 5> hr_printed = {{
      {none, 0.3, 4.7}, {none, 2.1, 3.7}, {none, 7.1, -4.7}, {none, none, none}, {none, 4.3, none}}};
  const std::array<std::array<std::optional<double>, 3>, 5> nmr_printed = {{
      {none, -16.3, 9.8}, {none, -6.2, 21.4}, {none, 11.3, -0.1}, {none, 3.8, 8.8}, {none, 18.6, none}}};

  const auto t0 = Clock::now();
  const Table1 t = summarize(subjects);
  const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();

  Checker c;
  int cells = 0;
  const auto cell = [&](const std::optional<double>& got, double printed, int decimals, const std::string& name) {
    ++cells;
    if (!got) {
      c.check(false, name + " missing");
      return;
    }
    const double r = round_to(*got, decimals);
    c.check(std::abs(r - printed) <= 0.05 + 1e-9, name + " " + fmt(r, 6) + " vs printed " + fmt(printed, 6));
  };
  for (std::size_t s = 0; s < 5; ++s) {
    for (std::size_t k : {NE, AS}) {
      const std::string id = "S" + std::to_string(s + 1) + (k == NE ? " NoExo" : " Assist");
      if (hr_printed[s][k]) cell(t.subjects[s].hr[k], *hr_printed[s][k], 1, id + " HR");
      else c.check(!t.subjects[s].hr[k], id + " HR should be excluded");
      if (nmr_printed[s][k]) cell(t.subjects[s].nmr[k], *nmr_printed[s][k], 1, id + " NMR");
      else c.check(!t.subjects[s].nmr[k], id + " NMR should be excluded");
    }
  }
  const auto stat = [&](const Stat& s, std::size_t n, double mean, double sd, int mean_dec, int sd_dec,
                        const std::string& name) {
    c.check(s.n == n, name + " n=" + std::to_string(s.n));
    cell(s.mean, mean, mean_dec, name + " mean");
    cell(s.sd, sd, sd_dec, name + " SD");
  };
  stat(t.height, 5, 1.728, 0.127, 3, 3, "height");
  stat(t.mass, 5, 86.45, 16.62, 2, 2, "mass");
  stat(t.hr[ZT], 4, 124.5, 14.4, 1, 1, "HR ZT");
  stat(t.hr[NE], 4, 120.4, 16.9, 1, 1, "HR NoExo");
  stat(t.hr[AS], 3, 124.5, 14.3, 1, 1, "HR Assist");
  stat(t.nmr[ZT], 5, 4.186, 0.680, 3, 3, "NMR ZT");
  stat(t.nmr[NE], 5, 4.071, 0.702, 3, 3, "NMR NoExo");
  stat(t.nmr[AS], 4, 3.504, 0.140, 3, 3, "NMR Assist");
  cell(t.hr_mean_change[NE], 3.45, 2, "HR NoExo mean change");
  cell(t.hr_mean_change[AS], 1.23, 2, "HR Assist mean change");
  cell(t.nmr_mean_change[NE], 2.24, 2, "NMR NoExo mean change");
  cell(t.nmr_mean_change[AS], 9.98, 2, "NMR Assist mean change");
  c.check(elapsed < 1.0, "took " + fmt(elapsed) + " s");
  c.note(std::to_string(cells) + " printed cells");
  return c.outcome();
}

// ------------------------------------------------------------------ brockway

Outcome brockway() {
  using analysis::brockway_power;
  Checker c;
  const double fixture = brockway_power(1000.0, 900.0, 80.0);
  c.check(fixture == 4.31875, "fixture gave " + fmt(fixture, 17));
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> gas(0.0, 4000.0), mass(40.0, 140.0), k(0.1, 10.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double o1 = gas(rng), c1 = gas(rng), o2 = gas(rng), c2 = gas(rng), m = mass(rng), a = k(rng);
    const double sum = brockway_power(o1 + o2, c1 + c2, m);
    const double parts = brockway_power(o1, c1, m) + brockway_power(o2, c2, m);
    worst = std::max(worst, std::abs(sum - parts) / std::max(1.0, std::abs(sum)));
    const double scaled = brockway_power(a * o1, a * c1, m);
    worst = std::max(worst, std::abs(scaled - a * brockway_power(o1, c1, m)) / std::max(1.0, std::abs(scaled)));
    const double heavy = brockway_power(o1, c1, a * m);
    worst = std::max(worst, std::abs(heavy * a - brockway_power(o1, c1, m)) / std::max(1.0, std::abs(heavy * a)));
  }
  c.check(worst < 1e-12, "property residual " + fmt(worst));
  c.note("fixture " + fmt(fixture, 10) + " W/kg, property residual " + fmt(worst, 2));
  return c.outcome();
}

// ------------------------------------------------------------------ gradient

Outcome gradient_check() {
  using namespace ecn;
  Checker c;
  const auto t0 = Clock::now();
  const LossWeights w{0.01, 1.0};
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::vector<std::vector<int>> nets{{5, 6, 4}, {8, 7, 4}, {4, 6, 5, 4}};
  double worst = 0.0;
  std::size_t coords = 0;
  for (std::size_t n = 0; n < nets.size(); ++n) {
    MlpParams p = MlpParams::glorot(nets[n], 500 + n);
    for (auto& l : p.layers) {
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = 0.1 * u(rng);
    }
    Eigen::MatrixXd x(nets[n].front(), 6), y(4, 6);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = u(rng);
    MlpParams grad;
    loss_and_gradient(p, x, y, w, &grad);
    const auto g = grad.flatten();
    auto theta = p.flatten();
    const double eps = 1e-5;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double keep = theta[i];
      theta[i] = keep + eps;
      p.assign(theta);
      const double up = loss_and_gradient(p, x, y, w, nullptr).total();
      theta[i] = keep - eps;
      p.assign(theta);
      const double down = loss_and_gradient(p, x, y, w, nullptr).total();
      theta[i] = keep;
      p.assign(theta);
      const double fd = (up - down) / (2.0 * eps);
      worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6}));
      ++coords;
    }
  }
  const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
  c.check(worst < 1e-5, "max relative error " + fmt(worst));
  c.check(elapsed < 10.0, "took " + fmt(elapsed) + " s");
  c.note(std::to_string(coords) + " coordinates, max relative error " + fmt(worst, 3) + ", " + fmt(elapsed, 2) + " s");
  return c.outcome();
}

// ------------------------------------------------------------------ loss

Outcome loss_structure() {
  using namespace ecn;
  Checker c;
  const LossWeights w;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  bool symm_zero = true;
  for (int i = 0; i < 1000; ++i) {
    const double h = u(rng), k = u(rng);
    symm_zero = symm_zero && loss_from_outputs(Action(h, h, k, k), Action(u(rng), u(rng), u(rng), u(rng)), w).symm == 0.0;
  }
  c.check(symm_zero, "symmetry term nonzero for mirrored outputs");
  const Action y(0.5, 0.5, -0.2, -0.2);
  const double fixture = loss_from_outputs(y, y, w).total();
  c.check(std::abs(fixture - 0.0058) < 1e-12, "fixture loss " + fmt(fixture, 17));

  bool inside = true;
  MlpParams psi = MlpParams::glorot(default_dims(), 0);
  for (int trial = 0; trial < 100000; ++trial) {
    if (trial % 10000 == 0) psi = MlpParams::glorot(default_dims(), static_cast<std::uint64_t>(trial) + 1);
    EcnState x;
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = 3.0 * u(rng);
    inside = inside && (forward(psi, x).array().abs() < 1.0).all();
  }
  c.check(inside, "output outside (-1, 1)");
  c.note("fixture loss " + fmt(fixture, 12) + ", 1e5 outputs inside (-1, 1)");
  return c.outcome();
}

// ------------------------------------------------------------------ physics

Outcome physics() {
  using namespace dynamics;
  Checker c;
  const BodyParams body = anthropometric_scale(1.73, 86.0);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> ang(-0.5, 2.0), vel(-3.0, 3.0), acc(-20.0, 20.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    PlantState s;
    s.q = Triple(ang(rng) * 0.5, ang(rng) + 0.5, ang(rng));
    s.qdot = Triple(vel(rng), vel(rng), vel(rng));
    const Triple qddot(acc(rng), acc(rng), acc(rng));
    const Triple back = forward_dynamics(s, inverse_dynamics(s.q, s.qdot, qddot, body), body);
    worst = std::max(worst, (back - qddot).norm() / std::max(1.0, qddot.norm()));
  }
  c.check(worst < 1e-8, "ID/FD round trip " + fmt(worst));

  BodyParams hanging = body;
  hanging.gravity = -9.81;
  JointStops stops = default_stops();
  stops.enabled = false;
  PlantState s;
  s.q = Triple(0.1, 0.2, 0.1);
  const double e0 = mechanical_energy(s, hanging);
  const int seconds = 5;
  double drift = 0.0;
  for (int k = 1; k <= seconds * 1000; ++k) {
    s = step(s, Triple::Zero(), hanging, 0.001, stops);
    if (k % 1000 == 0) {
      drift = std::max(drift, std::abs(mechanical_energy(s, hanging) - e0) / std::abs(e0) / (k / 1000.0));
    }
  }
  c.check(drift < 1e-3, "energy drift " + fmt(drift * 100.0) + " %/s");

  const SquatReference ref = generate_reference({}, 4.0, kDefaultReferenceSamples, body);
  bool exact = true;
  for (double scale : {0.8, 1.0, 2.0}) {
    const SquatReference r = scale_reference_time(ref, scale);
    for (int i = 0; i <= 20; ++i) {
      const double ph = i / 20.0;
      const auto a = ref.at_phase(ph);
      const auto b = r.at_phase(ph);
      exact = exact && b.q == a.q && (b.qdot - scale * a.qdot).norm() <= 1e-15 * (1.0 + a.qdot.norm()) &&
              (b.qddot - scale * scale * a.qddot).norm() <= 1e-14 * (1.0 + a.qddot.norm());
    }
    exact = exact && std::abs(r.period() - 4.0 / scale) < 1e-15;
  }
  c.check(exact, "temporal scaling identities");
  c.note("round trip " + fmt(worst, 2) + ", energy drift " + fmt(drift * 100.0, 2) + " %/s over " +
         std::to_string(seconds) + " s");
  return c.outcome();
}

// ------------------------------------------------------------------ effort

struct Trained {
  fs::path dir;
  bool ok = false;
  double train_s = 0.0;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained r;
    r.dir = work_dir() / "train";
    const auto t0 = Clock::now();
    r.ok = exo({"--config", std::string(EXO_CONFIGS_DIR) + "/default.json", "--out", r.dir.string(), "train"}) == 0;
    r.train_s = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
  }();
  return t;
}

Outcome effort_reduction() {
  Checker c;
  const auto t0 = Clock::now();
  const Trained& t = trained();
  c.check(t.ok, "train failed");
  if (!t.ok) return c.outcome();
  const fs::path zero = work_dir() / "sim_zero";
  const fs::path assist = work_dir() / "sim_assist";
  const std::string gains = (t.dir / "gains.json").string();
  c.check(exo({"--out", zero.string(), "simulate", "--condition", "zero", "--gains", gains}) == 0, "zero rollout");
  c.check(exo({"--out", assist.string(), "simulate", "--condition", "assist", "--psi", (t.dir / "ecn.bin").string(),
               "--gains", gains}) == 0,
          "assist rollout");
  const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
  if (!fs::exists(zero / "effort_report.json") || !fs::exists(assist / "effort_report.json")) return c.outcome();

  const auto ez = read_json(zero / "effort_report.json");
  const auto ea = read_json(assist / "effort_report.json");
  const auto cfg = read_json(assist / "manifest.json").at("config");
  const double rms_drop = 100.0 * (1.0 - ea.at("human_torque_rms").get<double>() / ez.at("human_torque_rms").get<double>());
  const double effort_drop = 100.0 * (1.0 - ea.at("effort").get<double>() / ez.at("effort").get<double>());
  const double rz = ez.at("motion_match_reward").get<double>();
  const double ra = ea.at("motion_match_reward").get<double>();
  c.check(cfg.at("simulate").at("tau_max") == 10.0 && cfg.at("simulate").at("assist_scale") == 1.0 &&
              cfg.at("subject").at("height_m") == 1.73 && cfg.at("subject").at("mass_kg") == 86.0,
          "not the nominal configuration");
  c.check(ea.at("max_abs_exo_torque").get<double>() <= 10.0, "exo torque above 10 N m");
  c.check(rms_drop >= 5.0, "hip+knee torque RMS drop " + fmt(rms_drop) + " %");
  c.check(effort_drop >= 5.0, "muscle effort drop " + fmt(effort_drop) + " %");
  c.check(rz >= 0.85 && ra >= 0.85, "tracking reward " + fmt(rz) + " / " + fmt(ra));
  c.check(elapsed < 120.0, "took " + fmt(elapsed) + " s");
  c.note("torque RMS -" + fmt(rms_drop, 3) + " %, effort -" + fmt(effort_drop, 3) + " %, reward " + fmt(rz, 4) +
         " / " + fmt(ra, 4) + ", " + fmt(elapsed, 3) + " s incl. training");
  return c.outcome();
}

// ------------------------------------------------------------------ kinematics

Outcome kinematics() {
  using namespace analysis;
  Checker c;
  const dynamics::Plant plant{dynamics::anthropometric_scale(1.73, 86.0)};
  std::ostringstream found;
  for (const auto& [knee_deg, hip_deg] : {std::pair{120.0, 95.0}, std::pair{100.0, 75.0}}) {
    const dynamics::SquatDepth depth{deg2rad(knee_deg), deg2rad(hip_deg)};
    const auto ref = dynamics::generate_reference(depth, 4.0, dynamics::kDefaultReferenceSamples, plant.body);
    std::vector<double> knee, hip;
    const int per = 400;
    for (int i = 0; i <= 10 * per; ++i) {
      const auto p = ref.at_phase(static_cast<double>(i % per) / per + (i == 10 * per ? 1.0 : 0.0));
      knee.push_back(p.q[dynamics::kKnee]);
      hip.push_back(p.q[dynamics::kHip]);
    }
    const auto cycles = segment_cycles(knee);
    const std::string tag = fmt(knee_deg) + "/" + fmt(hip_deg);
    c.check(cycles.size() == 10, tag + " gave " + std::to_string(cycles.size()) + " cycles");
    if (cycles.empty()) continue;
    const double k = peak_flexion_deg(resample_cycles(knee, cycles));
    const double h = peak_flexion_deg(resample_cycles(hip, cycles));
    c.check(std::abs(k - knee_deg) <= 0.5, tag + " knee peak " + fmt(k));
    c.check(std::abs(h - hip_deg) <= 0.5, tag + " hip peak " + fmt(h));
    found << (found.tellp() > 0 ? ", " : "") << cycles.size() << " cycles at " << fmt(k, 5) << "/" << fmt(h, 5);
  }
  c.note(found.str());
  return c.outcome();
}

// ------------------------------------------------------------------ runtime

class UdpPeer {
 public:
  UdpPeer() {
    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
    socklen_t len = sizeof(addr);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    timeval tv{0, 200000};
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  }
  ~UdpPeer() { ::close(fd_); }
  UdpPeer(const UdpPeer&) = delete;
  UdpPeer& operator=(const UdpPeer&) = delete;

  std::uint16_t port() const { return port_; }

  void send(std::uint16_t port, std::span<const std::uint8_t> bytes) const {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::sendto(fd_, bytes.data(), bytes.size(), 0, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
  }

  std::optional<telemetry::StatePacket> receive_state() const {
    std::vector<std::uint8_t> buf(2048);
    const ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
    if (n < 0) return std::nullopt;
    buf.resize(static_cast<std::size_t>(n));
    const auto d = telemetry::decode_state(buf);
    if (!d.ok()) return std::nullopt;
    return d.value;
  }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

telemetry::CommandPacket command(telemetry::CommandType type, float arg = 0.0f) {
  telemetry::CommandPacket c;
  c.cmd = type;
  c.arg = arg;
  return c;
}

struct LogView {
  csv::Table table;
  std::size_t mode_col, t_col, tau_col;
  explicit LogView(const fs::path& p) : table(csv::read(p)) {
    mode_col = table.column("mode");
    t_col = table.column("t_ms");
    tau_col = table.column("tau_hipL");
  }
  std::size_t size() const { return table.rows.size(); }
  int mode(std::size_t r) const { return std::stoi(table.rows[r][mode_col]); }
  std::int64_t t(std::size_t r) const { return std::stoll(table.rows[r][t_col]); }
  double tau(std::size_t r, std::size_t j) const { return csv::parse_double(table.rows[r][tau_col + j], "tau"); }
};

// Torque bound on every row; the per-tick step bound on rows that stay in
// assistance (leaving it zeroes the command on the spot).
std::pair<double, double> torque_extremes(const LogView& log, std::size_t* step_violations, double rate) {
  double peak = 0.0, step = 0.0;
  JointVector prev{};
  for (std::size_t r = 0; r < log.size(); ++r) {
    for (std::size_t j = 0; j < kJointCount; ++j) {
      const double tau = log.tau(r, j);
      peak = std::max(peak, std::abs(tau));
      if (log.mode(r) == 1) {
        step = std::max(step, std::abs(tau - prev[j]));
        if (std::abs(tau - prev[j]) > rate + 1e-12) ++*step_violations;
      }
      prev[j] = tau;
    }
  }
  return {peak, step};
}

class Scripted : public runtime::SampleSource {
 public:
  Scripted(std::int64_t ticks, std::function<void(std::int64_t)> hook) : ticks_(ticks), hook_(std::move(hook)) {}
  std::optional<runtime::SourceSample> next(const JointVector&) override {
    if (tick_ >= ticks_) return std::nullopt;
    runtime::SourceSample s;
    s.t_ms = tick_ * runtime::kTickMs;
    const double x = 0.6 * (0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(tick_) / 400.0));
    s.angles = {x, x, 1.3 * x, 1.3 * x};
    hook_(tick_);
    ++tick_;
    return s;
  }

 private:
  std::int64_t ticks_;
  std::int64_t tick_ = 0;
  std::function<void(std::int64_t)> hook_;
};

// Share of 10 ms gaps over the tolerance in a bare sleep loop on this host.
std::uint32_t baseline_misses(int ticks) {
  const auto start = Clock::now();
  auto prev = start;
  std::uint32_t misses = 0;
  for (int i = 0; i < ticks; ++i) {
    std::this_thread::sleep_until(start + std::chrono::milliseconds(10 * i));
    const auto now = Clock::now();
    if (i > 0 && now - prev > std::chrono::milliseconds(runtime::kTickMs + runtime::kDeadlineToleranceMs)) ++misses;
    prev = now;
  }
  return misses;
}

Outcome runtime_safety() {
  Checker c;
  const Trained& t = trained();
  c.check(t.ok, "train failed");
  if (!t.ok) return c.outcome();
  const json config = cli::default_config();
  const auto limits = cli::limits_from_config(config);
  const auto psi = ecn::load_params(t.dir / "ecn.bin");
  const auto gains = cli::gains_from_json(read_json(t.dir / "gains.json"));
  const auto plant = cli::plant_from_config(config);
  const auto ref = cli::reference_from_config(config, plant);

  // Live: 3 minutes at 100 Hz, telemetry on, a console feeding heartbeats.
  const fs::path live_dir = work_dir() / "live";
  fs::create_directories(live_dir);
  runtime::SessionConfig sc;
  sc.limits = limits;
  sc.realtime = true;
  sc.watchdog = true;
  sc.max_ticks = 18000;
  sc.initial_mode = runtime::ControlMode::ZeroTorque;
  sc.log_path = live_dir / "session_log.csv";
  sc.events_path = live_dir / "session_events.csv";
  runtime::Session session(sc, psi, std::make_unique<runtime::SimulatedSubject>(plant, gains, ref, 0.002, 42));
  UdpPeer console;
  telemetry::ServerConfig scfg;
  scfg.command_port = 0;
  scfg.bridge_port = 0;
  scfg.stream_port = console.port();
  telemetry::TelemetryServer server(scfg, [&session](const telemetry::CommandPacket& cmd) { session.post_command(cmd); });
  server.start();
  session.attach_telemetry(&server);
  std::atomic<bool> done{false};
  std::thread feeder([&] {
    console.send(server.command_port(), telemetry::encode_command(command(telemetry::CommandType::SetMode, 1.0f)));
    while (!done) {
      console.send(server.command_port(), telemetry::encode_command(command(telemetry::CommandType::Heartbeat)));
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
  });
  const auto t0 = Clock::now();
  runtime::SessionSummary live;
  try {
    live = session.run();
  } catch (const std::exception& e) {
    c.check(false, std::string("live session threw: ") + e.what());
  }
  const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
  done = true;
  feeder.join();
  server.stop();

  const LogView log(sc.log_path);
  std::size_t assist_rows = 0;
  for (std::size_t r = 0; r < log.size(); ++r) assist_rows += log.mode(r) == 1 ? 1 : 0;
  std::size_t step_violations = 0;
  const auto [peak, step] = torque_extremes(log, &step_violations, limits.rate_limit);
  c.check(std::llabs(static_cast<long long>(log.size()) - 18000) <= 1, std::to_string(log.size()) + " log rows");
  c.check(live.missed_deadlines == 0, std::to_string(live.missed_deadlines) + " missed deadlines");
  c.check(peak <= limits.tau_max, "torque peak " + fmt(peak));
  c.check(step_violations == 0, std::to_string(step_violations) + " steps over " + fmt(limits.rate_limit) + " N m");
  c.check(assist_rows + 10 >= log.size(), "assistance held on " + std::to_string(assist_rows) + " rows");
  c.check(live.faults == 0, std::to_string(live.faults) + " faults");

  // Watchdog: heartbeats stop at 1 s; demotion due one tick past 1.5 s.
  const fs::path wd_dir = work_dir() / "watchdog";
  fs::create_directories(wd_dir);
  runtime::SessionConfig wc;
  wc.limits = limits;
  wc.realtime = false;
  wc.watchdog = true;
  wc.max_ticks = 0;
  wc.log_path = wd_dir / "log.csv";
  wc.events_path = wd_dir / "events.csv";
  runtime::Session* wd_ptr = nullptr;
  runtime::Session wd(wc, psi, std::make_unique<Scripted>(300, [&](std::int64_t tick) {
                        if (tick == 0) wd_ptr->post_command(command(telemetry::CommandType::SetMode, 1.0f));
                        if (tick > 0 && tick <= 100 && tick % 10 == 0)
                          wd_ptr->post_command(command(telemetry::CommandType::Heartbeat));
                      }));
  wd_ptr = &wd;
  wd.run();
  const LogView wlog(wc.log_path);
  std::int64_t demoted = -1;
  for (std::size_t r = 1; r < wlog.size(); ++r) {
    if (wlog.mode(r - 1) == 1 && wlog.mode(r) == 0) {
      demoted = wlog.t(r);
      break;
    }
  }
  c.check(demoted == 1510, "watchdog demotion at t=" + std::to_string(demoted));
  bool zero_after = true;
  for (std::size_t r = 0; r < wlog.size(); ++r) {
    if (wlog.t(r) >= 1510) {
      for (std::size_t j = 0; j < kJointCount; ++j) zero_after = zero_after && wlog.tau(r, j) == 0.0;
    }
  }
  c.check(zero_after, "torque after demotion");

  // EStop absorbs assist and zero commands until reset.
  const fs::path es_dir = work_dir() / "estop";
  fs::create_directories(es_dir);
  runtime::SessionConfig ec = wc;
  ec.watchdog = false;
  ec.log_path = es_dir / "log.csv";
  ec.events_path = es_dir / "events.csv";
  runtime::Session* es_ptr = nullptr;
  runtime::Session es(ec, psi, std::make_unique<Scripted>(800, [&](std::int64_t tick) {
                        using telemetry::CommandType;
                        if (tick == 0) es_ptr->post_command(command(CommandType::SetMode, 1.0f));
                        if (tick == 300) es_ptr->post_command(command(CommandType::EStop));
                        if (tick == 400) es_ptr->post_command(command(CommandType::SetMode, 1.0f));
                        if (tick == 450) es_ptr->post_command(command(CommandType::SetMode, 0.0f));
                        if (tick == 600) es_ptr->post_command(command(CommandType::Reset));
                        if (tick == 700) es_ptr->post_command(command(CommandType::SetMode, 1.0f));
                      }));
  es_ptr = &es;
  es.run();
  const LogView elog(ec.log_path);
  bool absorbing = elog.size() == 800;
  for (std::size_t r = 0; r < elog.size() && absorbing; ++r) {
    const int expect = r < 300 ? 1 : r < 600 ? 2 : r < 700 ? 0 : 1;
    absorbing = elog.mode(r) == expect;
    if (expect == 2) {
      for (std::size_t j = 0; j < kJointCount; ++j) absorbing = absorbing && elog.tau(r, j) == 0.0;
    }
  }
  c.check(absorbing, "estop sequence");

  c.note(std::to_string(log.size()) + " ticks in " + fmt(wall, 5) + " s, " + std::to_string(live.missed_deadlines) +
         " missed deadlines, peak " + fmt(peak, 3) + " N m, max step " + fmt(step, 3) + " N m, watchdog at " +
         std::to_string(demoted) + " ms");
  if (live.missed_deadlines > 0) {
    c.note("bare sleep loop on this host: " + std::to_string(baseline_misses(6000)) + " misses per 60 s");
  }
  return c.outcome();
}

// ------------------------------------------------------------------ telemetry

Outcome telemetry_suite() {
  using namespace telemetry;
  Checker c;
  std::mt19937_64 rng(4242);
  std::size_t roundtrip_fail = 0;
  for (int i = 0; i < 100000; ++i) {
    StatePacket s;
    s.mode = static_cast<std::uint8_t>(rng() % 3);
    s.flags = static_cast<std::uint8_t>(rng() % 4);
    s.seq = static_cast<std::uint32_t>(rng());
    s.t_ms = rng();
    std::uniform_real_distribution<float> f(-50.0f, 50.0f);
    for (auto* arr : {&s.angles, &s.velocities, &s.torque_cmd}) {
      for (float& v : *arr) v = f(rng);
    }
    s.scale = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
    s.missed_deadlines = static_cast<std::uint32_t>(rng());
    const auto ds = decode_state(encode_state(s));
    roundtrip_fail += ds.ok() && *ds.value == s ? 0 : 1;

    CommandPacket cmd;
    cmd.cmd = static_cast<CommandType>(rng() % 6);
    cmd.arg = cmd.cmd == CommandType::SetMode ? static_cast<float>(rng() % 2)
                                              : std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
    const std::size_t len = rng() % (kTagLength + 1);
    for (std::size_t k = 0; k < len; ++k) cmd.tag.push_back(static_cast<char>(32 + rng() % 95));
    cmd.seq = static_cast<std::uint32_t>(rng());
    const auto dc = decode_command(encode_command(cmd));
    roundtrip_fail += dc.ok() && *dc.value == cmd ? 0 : 1;
  }
  c.check(roundtrip_fail == 0, std::to_string(roundtrip_fail) + " round-trip failures");

  const auto valid_state = encode_state(StatePacket{});
  const auto valid_cmd = encode_command(CommandPacket{});
  std::vector<std::uint8_t> buf;
  std::size_t decoded = 0;
  for (int i = 0; i < 1000000; ++i) {
    const std::size_t len = rng() % 100;
    buf.resize(len);
    for (auto& b : buf) b = static_cast<std::uint8_t>(rng());
    if (i % 4 == 1) std::copy_n(valid_state.begin(), std::min<std::size_t>(len, 4 + rng() % 4), buf.begin());
    if (i % 4 == 3) std::copy_n(valid_cmd.begin(), std::min<std::size_t>(len, 4 + rng() % 3), buf.begin());
    decoded += decode_state(buf).ok() ? 1 : 0;
    decoded += decode_command(buf).ok() ? 1 : 0;
  }

  // Loopback: assistance, then estop, observed on the state stream.
  UdpPeer console;
  runtime::SessionConfig sc;
  sc.realtime = true;
  sc.max_ticks = 0;
  sc.initial_mode = runtime::ControlMode::Assist;
  auto psi = ecn::MlpParams::zeros({static_cast<int>(ecn::kInputDim), 4});
  psi.layers[0].bias << 30.0, 30.0, -30.0, -30.0;
  runtime::Session session(sc, psi, std::make_unique<Scripted>(1 << 30, [](std::int64_t) {}));
  ServerConfig scfg;
  scfg.command_port = 0;
  scfg.bridge_port = 0;
  scfg.stream_port = console.port();
  scfg.stream_decimation = 1;
  TelemetryServer server(scfg, [&session](const CommandPacket& cmd) { session.post_command(cmd); });
  server.start();
  session.attach_telemetry(&server);
  std::thread loop([&] { session.run(); });
  console.send(server.command_port(), encode_command(command(CommandType::Heartbeat)));

  bool assisting = false;
  for (int i = 0; i < 300 && !assisting; ++i) {
    const auto p = console.receive_state();
    assisting = p && p->mode == 1 && p->torque_cmd[0] == 10.0f;
  }
  c.check(assisting, "no assisted state observed");
  console.send(server.command_port(), encode_command(command(CommandType::EStop)));
  const auto sent = Clock::now();
  int packets_until_estop = -1;
  bool zero_torque = false;
  for (int i = 0; i < 50; ++i) {
    const auto p = console.receive_state();
    if (p && p->mode == 2) {
      packets_until_estop = i + 1;
      zero_torque = p->torque_cmd == std::array<float, 4>{};
      break;
    }
  }
  const double latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - sent).count();
  session.request_stop();
  loop.join();
  server.stop();
  c.check(packets_until_estop > 0 && packets_until_estop <= 3,
          "estop seen after " + std::to_string(packets_until_estop) + " packets");
  c.check(zero_torque, "estop packet carries torque");

  c.note("2e5 round trips, 1e6 fuzz buffers (" + std::to_string(decoded) + " decoded), estop in packet " +
         std::to_string(packets_until_estop) + " after " + fmt(latency_ms, 3) + " ms");
  return c.outcome();
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"Subject table reproduction", table_reproduction},
      {"Brockway correctness", brockway},
      {"Gradient check", gradient_check},
      {"Loss structure", loss_structure},
      {"Physics suite", physics},
      {"Closed-loop effort reduction", effort_reduction},
      {"Kinematics pipeline", kinematics},
      {"Runtime/safety", runtime_safety},
      {"Telemetry", telemetry_suite},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    failed += o.pass ? 0 : 1;
    std::printf("%s  %-30s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), s);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  std::error_code ec;
  fs::remove_all(work_dir(), ec);
  return failed;
}
