#include "exo/reference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "exo/csv.hpp"

namespace exo::dynamics {

namespace {

// Second derivatives of the periodic cubic spline through y (uniform step h,
// y.size() distinct points, the closing point implied). Cyclic tridiagonal
// system solved with the Sherman-Morrison correction.
std::vector<double> periodic_spline_curvature(const std::vector<double>& y, double h) {
  const std::size_t n = y.size();
  std::vector<double> rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double prev = y[(i + n - 1) % n];
    const double next = y[(i + 1) % n];
    rhs[i] = 6.0 * (next - 2.0 * y[i] + prev) / (h * h);
  }
  if (n < 3) return std::vector<double>(n, 0.0);

  // Diagonal 4, off-diagonals 1, corners 1.
  const double corner = 1.0;
  const double gamma = -4.0;
  std::vector<double> diag(n, 4.0);
  diag[0] -= gamma;
  diag[n - 1] -= corner * corner / gamma;

  auto solve_tridiagonal = [&](std::vector<double> d) {
    std::vector<double> c_prime(n), x(n);
    std::vector<double> b = diag;
    c_prime[0] = 1.0 / b[0];
    d[0] = d[0] / b[0];
    for (std::size_t i = 1; i < n; ++i) {
      const double m = b[i] - c_prime[i - 1];
      c_prime[i] = 1.0 / m;
      d[i] = (d[i] - d[i - 1]) / m;
    }
    x[n - 1] = d[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = d[i] - c_prime[i] * x[i + 1];
    return x;
  };

  std::vector<double> x = solve_tridiagonal(rhs);
  std::vector<double> u(n, 0.0);
  u[0] = gamma;
  u[n - 1] = corner;
  std::vector<double> z = solve_tridiagonal(u);
  const double factor =
      (x[0] + corner * x[n - 1] / gamma) / (1.0 + z[0] + corner * z[n - 1] / gamma);
  for (std::size_t i = 0; i < n; ++i) x[i] -= factor * z[i];
  return x;
}

struct Hermite {
  double value, first, second;
};

// Quintic Hermite on the unit interval.
Hermite quintic(double s, double y0, double d0, double e0, double y1, double d1, double e1) {
  const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;
  const double h0 = 1 - 10 * s3 + 15 * s4 - 6 * s5;
  const double h1 = s - 6 * s3 + 8 * s4 - 3 * s5;
  const double h2 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5;
  const double h3 = 0.5 * s3 - s4 + 0.5 * s5;
  const double h4 = -4 * s3 + 7 * s4 - 3 * s5;
  const double h5 = 10 * s3 - 15 * s4 + 6 * s5;

  const double g0 = -30 * s2 + 60 * s3 - 30 * s4;
  const double g1 = 1 - 18 * s2 + 32 * s3 - 15 * s4;
  const double g2 = s - 4.5 * s2 + 6 * s3 - 2.5 * s4;
  const double g3 = 1.5 * s2 - 4 * s3 + 2.5 * s4;
  const double g4 = -12 * s2 + 28 * s3 - 15 * s4;
  const double g5 = 30 * s2 - 60 * s3 + 30 * s4;

  const double k0 = -60 * s + 180 * s2 - 120 * s3;
  const double k1 = -36 * s + 96 * s2 - 60 * s3;
  const double k2 = 1 - 9 * s + 18 * s2 - 10 * s3;
  const double k3 = 3 * s - 12 * s2 + 10 * s3;
  const double k4 = -24 * s + 84 * s2 - 60 * s3;
  const double k5 = 60 * s - 180 * s2 + 120 * s3;

  return {y0 * h0 + d0 * h1 + e0 * h2 + e1 * h3 + d1 * h4 + y1 * h5,
          y0 * g0 + d0 * g1 + e0 * g2 + e1 * g3 + d1 * g4 + y1 * g5,
          y0 * k0 + d0 * k1 + e0 * k2 + e1 * k3 + d1 * k4 + y1 * k5};
}

double raised_cosine(double peak, double phase) {
  return 0.5 * peak * (1.0 - std::cos(2.0 * kPi * phase));
}

}  // namespace

SquatReference::SquatReference(double period, SquatDepth depth, double time_scale,
                               std::vector<ReferenceSample> samples)
    : period_(period), depth_(depth), time_scale_(time_scale), samples_(std::move(samples)) {
  if (!(period_ > 0.0)) throw ValidationError("period", "must be positive");
  if (samples_.size() < 2) throw ValidationError("samples", "need at least two samples");
  if (samples_.front().phase != 0.0 || samples_.back().phase != 1.0) {
    throw ValidationError("phase", "samples must span [0, 1]");
  }
  for (std::size_t i = 1; i < samples_.size(); ++i) {
    if (!(samples_[i].phase > samples_[i - 1].phase)) {
      throw ValidationError("phase", "must be strictly increasing");
    }
  }
}

ReferencePoint SquatReference::at_phase(double phase) const {
  phase = std::clamp(phase, 0.0, 1.0);
  auto it = std::upper_bound(samples_.begin(), samples_.end(), phase,
                             [](double p, const ReferenceSample& s) { return p < s.phase; });
  std::size_t hi = static_cast<std::size_t>(it - samples_.begin());
  hi = std::clamp<std::size_t>(hi, 1, samples_.size() - 1);
  const ReferenceSample& a = samples_[hi - 1];
  const ReferenceSample& b = samples_[hi];
  for (const ReferenceSample* knot : {&a, &b}) {
    if (phase == knot->phase) return {knot->q, knot->qdot, knot->qddot, phase};
  }
  const double width = b.phase - a.phase;
  const double s = (phase - a.phase) / width;

  // Phase-domain derivatives over the interval: d/ds = width * period * d/dt.
  const double ds_dt = 1.0 / (width * period_);
  ReferencePoint out;
  out.phase = phase;
  for (int j = 0; j < 3; ++j) {
    const Hermite h = quintic(s, a.q[j], a.qdot[j] / ds_dt, a.qddot[j] / (ds_dt * ds_dt), b.q[j],
                              b.qdot[j] / ds_dt, b.qddot[j] / (ds_dt * ds_dt));
    out.q[j] = h.value;
    out.qdot[j] = h.first * ds_dt;
    out.qddot[j] = h.second * ds_dt * ds_dt;
  }
  return out;
}

ReferencePoint SquatReference::at_time(double t) const {
  double phase = std::fmod(t / period_, 1.0);
  if (phase < 0.0) phase += 1.0;
  return at_phase(phase);
}

double balance_ankle_angle(double knee, double hip, const BodyParams& body, double tolerance) {
  auto com_x = [&](double ankle) { return center_of_mass(Triple(ankle, knee, hip), body).x(); };
  double lo = -kPi / 2.0;
  double hi = kPi / 2.0;
  double f_lo = com_x(lo);
  const double f_hi = com_x(hi);
  if (f_lo * f_hi > 0.0) throw NumericalError("infeasible depth: COM balance root not bracketed");
  while (hi - lo > tolerance) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = com_x(mid);
    if (f_mid == 0.0) return mid;
    if ((f_mid < 0.0) == (f_lo < 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

SquatReference generate_reference(const SquatDepth& depth, double period, int n_samples,
                                  const BodyParams& body) {
  if (!(depth.knee_peak >= 0.0 && depth.knee_peak <= 2.3)) {
    throw ValidationError("knee_peak", "must lie in [0, 2.3] rad");
  }
  if (!(depth.hip_peak >= 0.0 && depth.hip_peak <= 2.3)) {
    throw ValidationError("hip_peak", "must lie in [0, 2.3] rad");
  }
  if (!(period > 0.5)) throw ValidationError("period", "must exceed 0.5 s");
  if (n_samples < 50) throw ValidationError("n_samples", "must be at least 50");

  const std::size_t distinct = static_cast<std::size_t>(n_samples - 1);
  const double h = 1.0 / static_cast<double>(distinct);
  std::array<std::vector<double>, 3> values;
  for (auto& v : values) v.resize(distinct);
  for (std::size_t i = 0; i < distinct; ++i) {
    const double phase = static_cast<double>(i) * h;
    const double knee = raised_cosine(depth.knee_peak, phase);
    const double hip = raised_cosine(depth.hip_peak, phase);
    values[kKnee][i] = knee;
    values[kHip][i] = hip;
    values[kAnkle][i] = balance_ankle_angle(knee, hip, body);
  }

  std::vector<ReferenceSample> samples(static_cast<std::size_t>(n_samples));
  for (int j = 0; j < 3; ++j) {
    const std::vector<double> curvature = periodic_spline_curvature(values[j], h);
    for (std::size_t i = 0; i <= distinct; ++i) {
      const std::size_t k = i % distinct;
      const std::size_t next = (k + 1) % distinct;
      const double slope = (values[j][next] - values[j][k]) / h -
                           h * (2.0 * curvature[k] + curvature[next]) / 6.0;
      samples[i].q[j] = values[j][k];
      samples[i].qdot[j] = slope / period;
      samples[i].qddot[j] = curvature[k] / (period * period);
    }
  }
  for (std::size_t i = 0; i <= distinct; ++i) samples[i].phase = static_cast<double>(i) * h;
  samples.back().phase = 1.0;
  return SquatReference(period, depth, 1.0, std::move(samples));
}

SquatReference scale_reference_time(const SquatReference& ref, double scale) {
  if (!(scale >= 0.5 && scale <= 2.0)) throw ValidationError("scale", "must lie in [0.5, 2.0]");
  std::vector<ReferenceSample> samples = ref.samples();
  const double scale_sq = scale * scale;
  for (auto& s : samples) {
    s.qdot *= scale;
    s.qddot *= scale_sq;
  }
  return SquatReference(ref.period() / scale, ref.depth(), ref.time_scale() * scale,
                        std::move(samples));
}

void save_reference_csv(const SquatReference& ref, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# period=" << csv::format_double(ref.period())
      << ",time_scale=" << csv::format_double(ref.time_scale())
      << ",knee_peak=" << csv::format_double(ref.depth().knee_peak)
      << ",hip_peak=" << csv::format_double(ref.depth().hip_peak) << "\n";
  out << "phase,q_ankle,q_knee,q_hip,qdot_ankle,qdot_knee,qdot_hip,qddot_ankle,qddot_knee,"
         "qddot_hip\n";
  for (const auto& s : ref.samples()) {
    out << csv::format_double(s.phase);
    for (const Triple* v : {&s.q, &s.qdot, &s.qddot}) {
      for (int j = 0; j < 3; ++j) out << ',' << csv::format_double((*v)[j]);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

SquatReference load_reference_csv(const std::filesystem::path& path) {
  const csv::Table table = csv::read(path);
  std::map<std::string, double> meta;
  for (const auto& comment : table.comments) {
    for (const auto& item : csv::split(comment)) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) continue;
      meta[item.substr(0, eq)] = csv::parse_double(item.substr(eq + 1), item.substr(0, eq));
    }
  }
  for (const char* key : {"period", "time_scale", "knee_peak", "hip_peak"}) {
    if (!meta.count(key)) throw FormatError(key, "missing metadata");
  }
  static const char* kCols[] = {"q_ankle",     "q_knee",     "q_hip",       "qdot_ankle",
                                "qdot_knee",   "qdot_hip",   "qddot_ankle", "qddot_knee",
                                "qddot_hip"};
  const std::size_t phase_col = table.column("phase");
  std::vector<std::size_t> cols;
  for (const char* c : kCols) cols.push_back(table.column(c));
  std::vector<ReferenceSample> samples;
  for (const auto& row : table.rows) {
    ReferenceSample s;
    s.phase = csv::parse_double(row[phase_col], "phase");
    for (int j = 0; j < 3; ++j) {
      s.q[j] = csv::parse_double(row[cols[j]], kCols[j]);
      s.qdot[j] = csv::parse_double(row[cols[3 + j]], kCols[3 + j]);
      s.qddot[j] = csv::parse_double(row[cols[6 + j]], kCols[6 + j]);
    }
    samples.push_back(s);
  }
  return SquatReference(meta["period"], SquatDepth{meta["knee_peak"], meta["hip_peak"]},
                        meta["time_scale"], std::move(samples));
}

}  // namespace exo::dynamics
