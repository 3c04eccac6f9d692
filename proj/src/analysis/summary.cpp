#include <cmath>
#include <fstream>
#include <numeric>

#include "exo/analysis.hpp"
#include "exo/csv.hpp"

namespace exo::analysis {

const char* to_string(Condition c) {
  switch (c) {
    case Condition::ZeroTorque: return "ZeroTorque";
    case Condition::NoExo: return "NoExo";
    case Condition::Assistance: return "Assistance";
  }
  return "?";
}

std::optional<Condition> parse_condition(std::string_view text) {
  if (text == "ZeroTorque" || text == "zero_torque" || text == "ZT") return Condition::ZeroTorque;
  if (text == "NoExo" || text == "no_exo") return Condition::NoExo;
  if (text == "Assistance" || text == "assistance" || text == "Assist") return Condition::Assistance;
  return std::nullopt;
}

Stat describe(std::span<const double> values) {
  Stat s;
  s.n = values.size();
  if (s.n == 0) return s;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  s.mean = mean;
  if (s.n >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

namespace {

std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return round_to(std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()), 2);
}

}  // namespace

Table1 summarize(std::span<const SubjectInput> subjects) {
  if (subjects.empty()) throw ValidationError("subjects", "no subjects to summarize");
  Table1 t;
  std::vector<double> heights, masses;
  std::array<std::vector<double>, 3> hr, nmr, hr_change, nmr_change;

  for (const auto& s : subjects) {
    if (s.mass && !(*s.mass > 0.0)) throw ValidationError("subject " + s.id + " mass", "must be positive");
    if (s.height) heights.push_back(*s.height);
    if (s.mass) masses.push_back(*s.mass);
    SubjectChanges ch;
    ch.id = s.id;
    const auto& zt = s.conditions[0];
    for (std::size_t c = 0; c < 3; ++c) {
      const auto& v = s.conditions[c];
      if (v.hr && !s.hr_invalid) hr[c].push_back(*v.hr);
      if (v.nmr) nmr[c].push_back(*v.nmr);
      if (c == 0) continue;
      if (v.hr && zt.hr && !s.hr_invalid) {
        ch.hr[c] = round_to(percent_change(*zt.hr, *v.hr), 1);
        hr_change[c].push_back(*ch.hr[c]);
      }
      if (v.nmr && zt.nmr) {
        ch.nmr[c] = round_to(percent_change(*zt.nmr, *v.nmr), 1);
        nmr_change[c].push_back(*ch.nmr[c]);
      }
    }
    t.subjects.push_back(std::move(ch));
  }
  t.height = describe(heights);
  t.mass = describe(masses);
  for (std::size_t c = 0; c < 3; ++c) {
    t.hr[c] = describe(hr[c]);
    t.nmr[c] = describe(nmr[c]);
    t.hr_mean_change[c] = mean_of(hr_change[c]);
    t.nmr_mean_change[c] = mean_of(nmr_change[c]);
  }
  return t;
}

namespace {

std::string num(const std::optional<double>& v, int decimals) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, round_to(*v, decimals));
  return buf;
}

std::string mean_sd(const Stat& s, int decimals) {
  if (s.empty()) return "";
  std::string out = num(s.mean, decimals);
  if (s.sd) out += " (" + num(s.sd, decimals) + ")";
  return out;
}

}  // namespace

void write_table1_csv(const Table1& table, std::span<const SubjectInput> subjects,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "subject,height_m,mass_kg";
  for (const char* metric : {"hr", "nmr"}) {
    for (Condition c : kConditions) {
      out << ',' << metric << '_' << to_string(c);
      if (c != Condition::ZeroTorque) out << ',' << metric << '_' << to_string(c) << "_pct";
    }
  }
  out << '\n';
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& s = subjects[i];
    const auto& ch = table.subjects[i];
    out << s.id << ',' << num(s.height, 2) << ',' << num(s.mass, 2);
    for (std::size_t c = 0; c < 3; ++c) {
      out << ',' << (s.hr_invalid ? "" : num(s.conditions[c].hr, 1));
      if (c) out << ',' << num(ch.hr[c], 1);
    }
    for (std::size_t c = 0; c < 3; ++c) {
      out << ',' << num(s.conditions[c].nmr, 3);
      if (c) out << ',' << num(ch.nmr[c], 1);
    }
    out << '\n';
  }
  out << "Mean (SD)," << mean_sd(table.height, 3) << ',' << mean_sd(table.mass, 2);
  for (std::size_t c = 0; c < 3; ++c) out << ',' << mean_sd(table.hr[c], 1) << (c ? "," : "");
  for (std::size_t c = 0; c < 3; ++c) out << ',' << mean_sd(table.nmr[c], 3) << (c ? "," : "");
  out << '\n';
  out << "Mean % change,,";
  for (std::size_t c = 0; c < 3; ++c) out << ',' << (c ? "," + num(table.hr_mean_change[c], 2) : "");
  for (std::size_t c = 0; c < 3; ++c) out << ',' << (c ? "," + num(table.nmr_mean_change[c], 2) : "");
  out << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace exo::analysis
