#include "odmr/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "odmr/error.hpp"

namespace odmr {

// --- Spectrum / MeasurementGrid ---------------------------------------------

void Spectrum::validate() const {
  if (signal.size() != freq_mhz.size() || sigma.size() != freq_mhz.size()) {
    throw SchemaError("spectrum columns have unequal lengths");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (!std::isfinite(freq_mhz[i]) || !std::isfinite(signal[i]) || !std::isfinite(sigma[i])) {
      throw SchemaError("spectrum row " + std::to_string(i) + " has a non-finite value");
    }
    if (!(sigma[i] > 0.0)) throw SchemaError("spectrum row " + std::to_string(i) + ": sigma <= 0");
    if (i > 0 && !(freq_mhz[i] > freq_mhz[i - 1])) {
      throw SchemaError("freq_mhz is not strictly increasing at row " + std::to_string(i));
    }
  }
}

namespace {

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

std::vector<double> MeasurementGrid::distinct_powers() const {
  std::vector<double> v;
  for (const auto& r : records) v.push_back(r.power_mw);
  return sorted_unique(std::move(v));
}

std::vector<double> MeasurementGrid::distinct_rabis() const {
  std::vector<double> v;
  for (const auto& r : records) v.push_back(r.rabi_mhz);
  return sorted_unique(std::move(v));
}

std::size_t MeasurementGrid::power_index(double power_mw) const {
  const auto powers = distinct_powers();
  const auto it = std::lower_bound(powers.begin(), powers.end(), power_mw);
  if (it == powers.end() || *it != power_mw) {
    throw InvalidParameter("power " + format_number(power_mw) + " mW is not in the grid");
  }
  return static_cast<std::size_t>(it - powers.begin());
}

void MeasurementGrid::validate() const {
  std::vector<std::pair<double, double>> keys;
  for (const auto& r : records) {
    const double vals[] = {r.power_mw, r.rabi_mhz, r.width_mhz, r.width_sigma, r.amplitude,
                           r.amplitude_sigma};
    for (double v : vals) {
      if (!std::isfinite(v)) throw SchemaError("grid record has a non-finite value");
    }
    if (!(r.width_sigma > 0.0) || !(r.amplitude_sigma > 0.0)) {
      throw SchemaError("grid sigmas must be > 0");
    }
    keys.emplace_back(r.power_mw, r.rabi_mhz);
  }
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) {
    throw SchemaError("grid has duplicate (power, rabi) pairs");
  }
}

// --- synthetic data -----------------------------------------------------------

Spectrum synth_spectrum(const HyperfineModel& truth, std::span<const double> grid,
                        const std::optional<SideResonance>& side, double noise_rel,
                        std::uint64_t seed) {
  if (!(noise_rel >= 0.0)) throw InvalidParameter("synth_spectrum: noise_rel must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Spectrum s;
  s.freq_mhz.assign(grid.begin(), grid.end());
  s.signal.reserve(grid.size());
  s.sigma.assign(grid.size(), noise_rel > 0.0 ? noise_rel : kNoiseFloor);
  if (side) s.meta.delta_side_mhz = side->delta_mhz;
  for (double nu : grid) {
    double v = triple_lorentzian(truth, nu);
    if (side) {
      const double g2 = side->hwhm_mhz * side->hwhm_mhz;
      for (double sgn : {-1.0, 1.0}) {
        const double x = nu - truth.center_mhz - sgn * side->delta_mhz;
        v -= side->depth * g2 / (x * x + g2);
      }
    }
    if (noise_rel > 0.0) v += noise_rel * normal(rng);
    s.signal.push_back(v);
  }
  s.validate();
  return s;
}

MeasurementGrid synth_grid(const WidthModelParams& wp, const ContrastModelParams& cp,
                           std::span<const double> powers, std::span<const double> rabis,
                           const GridNoise& noise, std::uint64_t seed) {
  wp.validate();
  if (wp.a_over_g2.size() != powers.size()) {
    throw InvalidParameter("synth_grid: need one a(P)/gamma2 entry per power");
  }
  if (noise.width_rel < 0.0 || noise.amplitude_rel < 0.0) {
    throw InvalidParameter("synth_grid: noise must be >= 0");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MeasurementGrid g;
  for (std::size_t i = 0; i < powers.size(); ++i) {
    for (double f : rabis) {
      GridRecord r;
      r.power_mw = powers[i];
      r.rabi_mhz = f;
      const double w = total_width(wp, wp.a_over_g2[i], powers[i], f);
      const double a = contrast_model(cp, powers[i], f);
      r.width_sigma = (noise.width_rel > 0.0 ? noise.width_rel : kNoiseFloor) * w;
      r.amplitude_sigma = (noise.amplitude_rel > 0.0 ? noise.amplitude_rel : kNoiseFloor) * a;
      const double nw = normal(rng);
      const double na = normal(rng);
      r.width_mhz = w + (noise.width_rel > 0.0 ? r.width_sigma * nw : 0.0);
      r.amplitude = a + (noise.amplitude_rel > 0.0 ? r.amplitude_sigma * na : 0.0);
      g.records.push_back(r);
    }
  }
  g.validate();
  return g;
}

// --- Rabi calibration ---------------------------------------------------------

double RabiCalibration::rabi_at(double mw_power) const {
  if (mw_power < 0.0) throw InvalidParameter("rabi_at: MW power must be >= 0");
  return k_rabi * std::sqrt(mw_power);
}

RabiCalibration fit_rabi_calibration(std::span<const RabiRecord> records) {
  if (records.size() < 2) {
    throw InsufficientData("fit_rabi_calibration: need at least two records");
  }
  double num = 0.0;
  double den = 0.0;
  for (const auto& r : records) {
    if (!(r.mw_power >= 0.0) || !std::isfinite(r.rabi_mhz)) {
      throw InvalidParameter("fit_rabi_calibration: invalid record");
    }
    num += r.rabi_mhz * std::sqrt(r.mw_power);
    den += r.mw_power;
  }
  if (!(den > 0.0)) throw InsufficientData("fit_rabi_calibration: all MW powers are zero");

  RabiCalibration cal;
  cal.k_rabi = num / den;
  cal.records.assign(records.begin(), records.end());
  double ss = 0.0;
  for (const auto& r : records) {
    const double res = r.rabi_mhz - cal.k_rabi * std::sqrt(r.mw_power);
    cal.residuals_mhz.push_back(res);
    ss += res * res;
  }
  cal.residual_rms_mhz = std::sqrt(ss / static_cast<double>(records.size()));

  const double n = static_cast<double>(records.size());
  double mp = 0.0, mr = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    mp += records[i].mw_power / n;
    mr += cal.residuals_mhz[i] / n;
  }
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double dx = records[i].mw_power - mp;
    const double dy = cal.residuals_mhz[i] - mr;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  cal.residual_trend = (sxx > 0.0 && syy > 1e-30 * (1.0 + sxx)) ? sxy / std::sqrt(sxx * syy) : 0.0;
  return cal;
}

// --- text formats -------------------------------------------------------------

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

struct Table {
  std::map<std::string, std::string> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> line_numbers;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

Table read_table(std::istream& is) {
  Table t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string content = trim(line);
    if (content.empty()) continue;
    if (content[0] == '#') {
      const auto eq = content.find('=');
      if (eq != std::string::npos) {
        t.meta[trim(content.substr(1, eq - 1))] = trim(content.substr(eq + 1));
      }
      continue;
    }
    // tokenize, remembering 1-based column positions
    std::vector<std::pair<std::string, std::size_t>> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      if (i >= line.size()) break;
      const std::size_t start = i;
      while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
      tokens.emplace_back(line.substr(start, i - start), start + 1);
    }
    if (t.columns.empty()) {
      for (auto& [tok, col] : tokens) t.columns.push_back(tok);
      continue;
    }
    if (tokens.size() != t.columns.size()) {
      throw ParseError("expected " + std::to_string(t.columns.size()) + " fields, found " +
                           std::to_string(tokens.size()),
                       line_no, tokens.empty() ? 1 : tokens.back().second);
    }
    std::vector<double> row;
    for (auto& [tok, col] : tokens) {
      double v = 0.0;
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
        throw ParseError("malformed number '" + tok + "'", line_no, col);
      }
      if (!std::isfinite(v)) throw ParseError("non-finite value '" + tok + "'", line_no, col);
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
    t.line_numbers.push_back(line_no);
  }
  if (t.columns.empty()) throw SchemaError("missing column header line");
  return t;
}

std::size_t column_index(const Table& t, const std::string& name) {
  const auto it = std::find(t.columns.begin(), t.columns.end(), name);
  if (it == t.columns.end()) throw SchemaError("missing column '" + name + "'");
  return static_cast<std::size_t>(it - t.columns.begin());
}

double meta_number(const Table& t, const std::string& key, double fallback) {
  const auto it = t.meta.find(key);
  if (it == t.meta.end()) return fallback;
  double v = 0.0;
  const auto& s = it->second;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw SchemaError("metadata '" + key + "' is not a finite number");
  }
  return v;
}

template <typename Fn>
void with_output(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open '" + path.string() + "' for writing");
  fn(os);
  if (!os) throw ConfigError("failed writing '" + path.string() + "'");
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open '" + path.string() + "'");
  return is;
}

}  // namespace

void write_spectrum(std::ostream& os, const Spectrum& s) {
  s.validate();
  os << "# odmr-spectrum v1\n";
  os << "# power_mw = " << format_number(s.meta.power_mw) << '\n';
  os << "# rabi_mhz = " << format_number(s.meta.rabi_mhz) << '\n';
  os << "# sample_id = " << s.meta.sample_id << '\n';
  os << "# delta_side_mhz = " << format_number(s.meta.delta_side_mhz) << '\n';
  os << "freq_mhz signal sigma\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    os << format_number(s.freq_mhz[i]) << ' ' << format_number(s.signal[i]) << ' '
       << format_number(s.sigma[i]) << '\n';
  }
}

Spectrum read_spectrum(std::istream& is) {
  const Table t = read_table(is);
  const auto fi = column_index(t, "freq_mhz");
  const auto si = column_index(t, "signal");
  const auto ui = column_index(t, "sigma");
  Spectrum s;
  for (const auto& row : t.rows) {
    s.freq_mhz.push_back(row[fi]);
    s.signal.push_back(row[si]);
    s.sigma.push_back(row[ui]);
  }
  s.meta.power_mw = meta_number(t, "power_mw", 0.0);
  s.meta.rabi_mhz = meta_number(t, "rabi_mhz", 0.0);
  s.meta.delta_side_mhz = meta_number(t, "delta_side_mhz", 33.0);
  if (const auto it = t.meta.find("sample_id"); it != t.meta.end()) s.meta.sample_id = it->second;
  s.validate();
  return s;
}

void write_spectrum(const std::filesystem::path& path, const Spectrum& s) {
  with_output(path, [&](std::ostream& os) { write_spectrum(os, s); });
}

Spectrum read_spectrum(const std::filesystem::path& path) {
  auto is = open_input(path);
  return read_spectrum(is);
}

void write_grid(std::ostream& os, const MeasurementGrid& g) {
  g.validate();
  os << "# odmr-grid v1\n";
  os << "power_mw rabi_mhz width_mhz width_sigma amplitude amplitude_sigma\n";
  for (const auto& r : g.records) {
    os << format_number(r.power_mw) << ' ' << format_number(r.rabi_mhz) << ' '
       << format_number(r.width_mhz) << ' ' << format_number(r.width_sigma) << ' '
       << format_number(r.amplitude) << ' ' << format_number(r.amplitude_sigma) << '\n';
  }
}

MeasurementGrid read_grid(std::istream& is) {
  const Table t = read_table(is);
  const std::size_t idx[] = {column_index(t, "power_mw"),    column_index(t, "rabi_mhz"),
                             column_index(t, "width_mhz"),   column_index(t, "width_sigma"),
                             column_index(t, "amplitude"),   column_index(t, "amplitude_sigma")};
  MeasurementGrid g;
  for (const auto& row : t.rows) {
    g.records.push_back({row[idx[0]], row[idx[1]], row[idx[2]], row[idx[3]], row[idx[4]],
                         row[idx[5]]});
  }
  g.validate();
  return g;
}

void write_grid(const std::filesystem::path& path, const MeasurementGrid& g) {
  with_output(path, [&](std::ostream& os) { write_grid(os, g); });
}

MeasurementGrid read_grid(const std::filesystem::path& path) {
  auto is = open_input(path);
  return read_grid(is);
}

void write_fit_report(std::ostream& os, const FitReport& r, const std::string& title) {
  os << "# odmr-fit-report v1\n";
  os << "title = " << title << '\n';
  os << "converged = " << (r.converged ? "true" : "false") << '\n';
  os << "iterations = " << r.iterations << '\n';
  os << "n_points = " << r.n_points << '\n';
  os << "chi_square = " << format_number(r.chi_square) << '\n';
  os << "residual_rms = " << format_number(r.residual_rms) << '\n';
  os << "gradient_norm = " << format_number(r.gradient_norm) << '\n';
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    os << r.names[i] << " = " << format_number(r.values[i]) << " ± "
       << format_number(r.ci68[i]) << '\n';
  }
  for (const auto& [lo, hi] : r.excluded_ranges) {
    os << "excluded = " << format_number(lo) << ' ' << format_number(hi) << '\n';
  }
  for (const auto& u : r.unidentifiable) os << "unidentifiable = " << u << '\n';
  for (const auto& w : r.warnings) os << "warning = " << w << '\n';

  nlohmann::ordered_json j;
  j["title"] = title;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["n_points"] = r.n_points;
  j["chi_square"] = r.chi_square;
  j["residual_rms"] = r.residual_rms;
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    nlohmann::ordered_json p;
    p["name"] = r.names[i];
    p["value"] = r.values[i];
    if (std::isfinite(r.ci68[i])) {
      p["ci68"] = r.ci68[i];
    } else {
      p["ci68"] = nullptr;
    }
    params.push_back(p);
  }
  j["params"] = params;
  j["excluded_ranges"] = r.excluded_ranges;
  j["unidentifiable"] = r.unidentifiable;
  j["warnings"] = r.warnings;
  os << "--- machine ---\n" << j.dump() << '\n';
}

void write_fit_report(const std::filesystem::path& path, const FitReport& r,
                      const std::string& title) {
  with_output(path, [&](std::ostream& os) { write_fit_report(os, r, title); });
}

}  // namespace odmr
