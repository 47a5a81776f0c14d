#include "odmr_cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <variant>

#include "CLI11.hpp"
#include "json.hpp"
#include "odmr/data_io.hpp"
#include "odmr/error.hpp"
#include "odmr/fitting.hpp"
#include "odmr/numeric.hpp"
#include "odmr/sensitivity.hpp"
#include "odmr/spin_models.hpp"

namespace odmr::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

// Every option of a command lives here once: bound to CLI11, settable from
// a JSON config and echoed to the manifest.
class OptionTable {
 public:
  using Target = std::variant<double*, std::uint64_t*, int*, std::string*, std::vector<double>*, bool*>;

  template <typename T>
  void add(CLI::App& app, const std::string& name, T& target, const std::string& help) {
    if constexpr (std::is_same_v<T, bool>) {
      app.add_flag("--" + name, target, help);
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      app.add_option("--" + name, target, help)->delimiter(',')->capture_default_str();
    } else {
      app.add_option("--" + name, target, help)->capture_default_str();
    }
    entries_.emplace_back(name, &target);
  }

  void apply(const Json& cfg, const std::string& command) {
    const Json* opts = &cfg;
    if (cfg.contains("command")) {
      if (cfg["command"] != command) {
        throw ConfigError("config was written for command '" + cfg["command"].get<std::string>() +
                          "', not '" + command + "'");
      }
    }
    if (cfg.contains("options")) opts = &cfg["options"];
    if (!opts->is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [raw_key, value] : opts->items()) {
      std::string key = raw_key;
      std::replace(key.begin(), key.end(), '_', '-');
      if (key == "config") continue;
      const auto it = std::find_if(entries_.begin(), entries_.end(),
                                   [&](const auto& e) { return e.first == key; });
      if (it == entries_.end()) throw ConfigError("unknown config key '" + raw_key + "'");
      try {
        std::visit([&](auto* t) { *t = value.get<std::remove_pointer_t<decltype(t)>>(); }, it->second);
      } catch (const nlohmann::json::exception&) {
        throw ConfigError("config key '" + raw_key + "' has the wrong type");
      }
    }
  }

  Json dump() const {
    Json j = Json::object();
    for (const auto& [name, target] : entries_) {
      if (name == "config") continue;
      std::visit([&, n = name](auto* t) { j[n] = *t; }, target);
    }
    return j;
  }

 private:
  std::vector<std::pair<std::string, Target>> entries_;
};

Json load_json(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

struct Common {
  std::uint64_t seed = 1;
  std::string out = "odmr-out";
  int verbosity = 1;
  std::string config;
};

void add_common(OptionTable& t, CLI::App& app, Common& c) {
  t.add(app, "seed", c.seed, "random seed");
  t.add(app, "out", c.out, "output directory");
  t.add(app, "verbosity", c.verbosity, "0 quiet, 1 normal, 2 chatty");
  t.add(app, "config", c.config, "JSON config; its values override flags");
}

// Writes files below the output directory and remembers their names.
class Outputs {
 public:
  Outputs(const std::string& dir, int verbosity, std::ostream& log)
      : dir_(dir), verbosity_(verbosity), log_(log) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
  }

  void write(const std::string& name, const std::function<void(std::ostream&)>& fn) {
    const fs::path path = dir_ / name;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open '" + path.string() + "' for writing");
    fn(os);
    if (!os) throw ConfigError("failed writing '" + path.string() + "'");
    files_.push_back(name);
    if (verbosity_ >= 1) log_ << "wrote " << path.string() << '\n';
  }

  void manifest(const std::string& command, const OptionTable& t, const Json& extra = {}) {
    Json j;
    j["tool"] = "odmr";
    j["version"] = kVersion;
    j["command"] = command;
    j["options"] = t.dump();
    auto listed = files_;
    listed.push_back("manifest.json");  // every file the run leaves behind
    j["outputs"] = listed;
    if (!extra.is_null()) j["results"] = extra;
    write("manifest.json", [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  int verbosity_;
  std::ostream& log_;
  std::vector<std::string> files_;
};

std::string indexed(const std::string& stem, std::size_t a, std::size_t b) {
  std::ostringstream os;
  os << stem << '_' << std::setw(3) << std::setfill('0') << a << '_' << std::setw(3)
     << std::setfill('0') << b << ".txt";
  return os.str();
}

// Shared by synth-grid and sensitivity-map.
struct ModelOptions {
  double dnu_inh = 3.08, ratio_g1_g2 = 0.0014, c_over_g2 = 0.018, p0_mw = 39.0, f0_mhz = 1.0;
  double a1 = 0.5, b1 = 0.5, c1 = 0.074;
  double theta = 22.9e-3, g1_over_c_mw = 0.71, g1g2 = 0.0047;

  void add(OptionTable& t, CLI::App& app) {
    t.add(app, "dnu-inh", dnu_inh, "inhomogeneous FWHM (MHz)");
    t.add(app, "ratio-g1-g2", ratio_g1_g2, "gamma1/gamma2");
    t.add(app, "c-over-g2", c_over_g2, "c/gamma2 (1/mW)");
    t.add(app, "p0-mw", p0_mw, "saturation power P0 (mW)");
    t.add(app, "f0-mhz", f0_mhz, "spin-flip saturation Rabi frequency (MHz)");
    t.add(app, "a1", a1, "a(P) slope (1/(MHz mW))");
    t.add(app, "b1", b1, "a(P) saturation power (mW)");
    t.add(app, "c1", c1, "a(P) offset (1/MHz)");
    t.add(app, "theta", theta, "readout asymmetry");
    t.add(app, "g1-over-c-mw", g1_over_c_mw, "gamma1/c (mW)");
    t.add(app, "g1g2", g1g2, "gamma1 gamma2 (1/us^2)");
  }

  WidthModelParams width(std::span<const double> powers) const {
    WidthModelParams w = WidthModelParams::reference(powers, ap());
    w.dnu_inh_mhz = dnu_inh;
    w.ratio_g1_g2 = ratio_g1_g2;
    w.c_over_g2 = c_over_g2;
    w.p0_mw = p0_mw;
    w.f0_mhz = f0_mhz;
    return w;
  }
  APModelParams ap() const { return {a1, b1, c1}; }
  ContrastModelParams contrast() const { return {theta, g1_over_c_mw, g1g2}; }
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void require_list(const std::vector<double>& v, const std::string& name, bool strictly_positive) {
  require(!v.empty(), "--" + name + " must not be empty");
  for (double x : v) {
    require(std::isfinite(x) && (strictly_positive ? x > 0.0 : x >= 0.0),
            "--" + name + (strictly_positive ? " entries must be > 0" : " entries must be >= 0"));
  }
}

// --- simulate ---------------------------------------------------------------

struct SimulateOptions {
  Common common;
  std::string model = "two-level";
  std::vector<double> powers{1.0};
  std::vector<double> rabis{0.5};
  double gamma1 = 0.0014, gamma2 = 1.0, c_per_mw = 0.018, theta = 22.9e-3;
  double gamma0 = 1.0 / 0.012, gamma_f = 1.0 / 0.012, gamma_s = 1.0 / 0.2;
  double dnu_inh = 3.08, center_mhz = 2654.0, span_mhz = 100.0, ahf = 2.2;
  int points = 2001;
  double noise = 1e-4;
  double side_depth = 0.0, delta_side_mhz = 33.0, side_hwhm = 2.0;
  double ir_absorption = 1.0;
};

// Homogeneous line of one NV class, then the ensemble: a Lorentzian spread
// of resonance frequencies adds its width, one orientation in four is
// resonant and the dip splits over three hyperfine lines.
HyperfineModel ensemble_line(const SimulateOptions& o, double power, double rabi) {
  LineshapeSummary hom;
  if (o.model == "two-level") {
    TwoLevelParams p;
    p.gamma1 = o.gamma1;
    p.gamma2 = o.gamma2;
    p.pump_rate = o.c_per_mw * power;
    p.rabi_mhz = rabi;
    p.theta = o.theta;
    hom = two_level_summary(p);
  } else {
    FiveLevelParams p;
    p.gamma0 = o.gamma0;
    p.gamma_f = o.gamma_f;
    p.gamma_s = o.gamma_s;
    p.pump_rate_tilde = 4.0 * o.c_per_mw * power;
    p.gamma1 = o.gamma1;
    p.gamma2 = o.gamma2;
    p.rabi_mhz = rabi;
    hom = five_level_summary(p, o.model == "five-level-ir" ? FiveLevelReadout::IrAbsorption
                                                            : FiveLevelReadout::Fluorescence);
    // IR readout is probe transmission 1 - k rho_ss, which dips by k times the
    // change in singlet population
    if (o.model == "five-level-ir") hom.contrast *= o.ir_absorption * hom.baseline;
  }
  const double total = hom.fwhm_mhz + o.dnu_inh;
  HyperfineModel m;
  m.center_mhz = o.center_mhz;
  m.splitting_mhz = o.ahf;
  m.hwhm_mhz = 0.5 * total;
  m.amplitude = hom.contrast * (hom.fwhm_mhz / total) / 12.0;
  return m;
}

int cmd_simulate(SimulateOptions& o, OptionTable& t, std::ostream& log) {
  require(o.model == "two-level" || o.model == "five-level-fluorescence" ||
              o.model == "five-level-ir",
          "--model must be two-level, five-level-fluorescence or five-level-ir");
  require_list(o.powers, "powers", false);
  require_list(o.rabis, "rabis", false);
  require(o.points >= 2, "--points must be >= 2");
  require(o.span_mhz > 0.0, "--span-mhz must be > 0");
  require(o.noise >= 0.0, "--noise must be >= 0");
  require(o.dnu_inh >= 0.0, "--dnu-inh must be >= 0");
  require(o.side_depth >= 0.0, "--side-depth must be >= 0");
  require(o.ir_absorption > 0.0 && o.ir_absorption <= 1.0, "--ir-absorption must be in (0, 1]");

  Outputs out(o.common.out, o.common.verbosity, log);
  const auto grid = numeric::linspace(o.center_mhz - 0.5 * o.span_mhz,
                                      o.center_mhz + 0.5 * o.span_mhz,
                                      static_cast<std::size_t>(o.points));
  std::optional<SideResonance> side;
  if (o.side_depth > 0.0) side = SideResonance{o.delta_side_mhz, o.side_depth, o.side_hwhm};
  std::uint64_t stream = 0;
  for (std::size_t ip = 0; ip < o.powers.size(); ++ip) {
    for (std::size_t ir = 0; ir < o.rabis.size(); ++ir) {
      const HyperfineModel m = ensemble_line(o, o.powers[ip], o.rabis[ir]);
      require(m.amplitude > 0.0 && m.amplitude <= 1.0 / 3.0,
              "setting P=" + format_number(o.powers[ip]) + " mW, f_R=" +
                  format_number(o.rabis[ir]) + " MHz gives no resonance (zero contrast)");
      Spectrum s = synth_spectrum(m, grid, side, o.noise, o.common.seed + stream++);
      s.meta.power_mw = o.powers[ip];
      s.meta.rabi_mhz = o.rabis[ir];
      s.meta.sample_id = o.model;
      s.meta.delta_side_mhz = o.delta_side_mhz;
      out.write(indexed("spectrum", ip, ir), [&](std::ostream& os) { write_spectrum(os, s); });
    }
  }
  out.manifest("simulate", t);
  return kExitOk;
}

// --- fit --------------------------------------------------------------------

struct FitOptions {
  Common common;
  std::string input;
  double ahf = 2.2;
  double exclude_side_mhz = 33.0;
  double exclude_width_mhz = 20.0;
  double exclude_center_mhz = 0.0;
  std::string grid_name = "grid.txt";
};

bool looks_like_spectrum(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::string first;
  std::getline(is, first);
  return first.rfind("# odmr-spectrum", 0) == 0;
}

int cmd_fit(FitOptions& o, OptionTable& t, std::ostream& log) {
  require(!o.input.empty(), "--input is required");
  require(o.exclude_side_mhz >= 0.0, "--exclude-side-mhz must be >= 0");
  std::vector<fs::path> files;
  const fs::path in(o.input);
  const bool batch = fs::is_directory(in);
  if (batch) {
    for (const auto& e : fs::directory_iterator(in)) {
      if (e.is_regular_file() && e.path().extension() == ".txt" && looks_like_spectrum(e.path())) {
        files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
    require(!files.empty(), "no spectrum files in directory '" + o.input + "'");
  } else {
    require(fs::is_regular_file(in), "input '" + o.input + "' does not exist");
    files.push_back(in);
  }

  ExclusionConfig ex;
  ex.enabled = o.exclude_side_mhz > 0.0;
  ex.delta_mhz = o.exclude_side_mhz;
  ex.width_mhz = o.exclude_width_mhz;
  if (o.exclude_center_mhz > 0.0) ex.center_mhz = o.exclude_center_mhz;

  Outputs out(o.common.out, o.common.verbosity, log);
  MeasurementGrid grid;
  for (const auto& f : files) {
    const Spectrum s = read_spectrum(f);
    const FitReport r = fit_spectrum(s, o.ahf, ex);
    out.write(f.stem().string() + ".fit.txt",
              [&](std::ostream& os) { write_fit_report(os, r, f.filename().string()); });
    GridRecord g;
    g.power_mw = s.meta.power_mw;
    g.rabi_mhz = s.meta.rabi_mhz;
    g.width_mhz = 2.0 * r.value("g");
    g.width_sigma = 2.0 * r.ci("g");
    g.amplitude = r.value("A");
    g.amplitude_sigma = r.ci("A");
    grid.records.push_back(g);
  }
  if (batch) {
    out.write(o.grid_name, [&](std::ostream& os) { write_grid(os, grid); });
  }
  out.manifest("fit", t);
  return kExitOk;
}

// --- global-fit -------------------------------------------------------------

struct GlobalFitOptions {
  Common common;
  std::string input;
  std::string form = "rabi-squared";
};

void summary_line(std::ostream& os, const std::string& key, const FitReport& r,
                  const std::string& name, const std::string& unit) {
  os << key << " = " << format_number(r.value(name)) << " ± " << format_number(r.ci(name));
  if (!unit.empty()) os << ' ' << unit;
  os << '\n';
}

Json report_json(const FitReport& r) {
  Json j;
  j["converged"] = r.converged;
  Json params = Json::object();
  for (std::size_t i = 0; i < r.names.size(); ++i) {
    params[r.names[i]]["value"] = r.values[i];
    if (std::isfinite(r.ci68[i])) {
      params[r.names[i]]["ci68"] = r.ci68[i];
    } else {
      params[r.names[i]]["ci68"] = nullptr;
    }
  }
  j["params"] = params;
  j["unidentifiable"] = r.unidentifiable;
  j["warnings"] = r.warnings;
  return j;
}

int cmd_global_fit(GlobalFitOptions& o, OptionTable& t, std::ostream& log, std::ostream& err) {
  require(!o.input.empty(), "--input is required");
  require(o.form == "rabi-squared" || o.form == "printed-linear",
          "--form must be rabi-squared or printed-linear");
  const MeasurementGrid grid = read_grid(fs::path(o.input));
  const SpinFlipForm form =
      o.form == "rabi-squared" ? SpinFlipForm::RabiSquared : SpinFlipForm::PrintedLinear;

  Outputs out(o.common.out, o.common.verbosity, log);
  Json results = Json::object();
  std::ostringstream summary;
  summary << "# odmr-global-summary v1\n";
  int failures = 0;
  auto failed = [&](const char* campaign, const Error& e) {
    ++failures;
    summary << campaign << " = failed: " << e.kind() << ": " << e.what() << '\n';
    results[campaign] = {{"error", e.kind()}, {"message", e.what()}};
    err << "warning: campaign=" << campaign << " kind=" << e.kind() << " message="
        << Json(std::string(e.what())).dump() << '\n';
  };
  auto surface = [&](const char* campaign, const FitReport& r) {
    for (const auto& u : r.unidentifiable) summary << "unidentifiable = " << campaign << ": " << u << '\n';
    for (const auto& w : r.warnings) summary << "warning = " << campaign << ": " << w << '\n';
    if (!r.unidentifiable.empty()) {
      std::string list;
      for (const auto& u : r.unidentifiable) list += (list.empty() ? "" : ",") + u;
      err << "warning: campaign=" << campaign << " kind=UnidentifiableParameter parameters=" << list
          << '\n';
    }
  };

  std::optional<WidthFitResult> width;
  try {
    width = global_width_fit(grid, {}, form);
    out.write("width_fit.txt", [&](std::ostream& os) { write_fit_report(os, width->report, "global width fit"); });
    const auto& r = width->report;
    summary << "## width model\n";
    summary_line(summary, "dnu_inh", r, "dnu_inh_mhz", "MHz");
    summary_line(summary, "gamma1/gamma2", r, "ratio_g1_g2", "");
    summary_line(summary, "c/gamma2", r, "c_over_g2", "1/mW");
    summary_line(summary, "P0", r, "p0_mw", "mW");
    summary_line(summary, "f0", r, "f0_mhz", "MHz");
    for (std::size_t i = 0; i < width->powers.size(); ++i) {
      summary << "a/gamma2 @ " << format_number(width->powers[i]) << " mW = "
              << format_number(r.values[5 + i]) << " ± " << format_number(r.ci68[5 + i])
              << " 1/MHz\n";
    }
    surface("width", r);
    results["width"] = report_json(r);
    results["width"]["powers_mw"] = width->powers;
  } catch (const Error& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const SchemaError*>(&e)) throw;
    failed("width", e);
  }

  if (width) {
    try {
      std::vector<double> a(width->report.values.begin() + 5, width->report.values.end());
      const auto m = static_cast<Eigen::Index>(a.size());
      const Eigen::MatrixXd cov = width->report.covariance.bottomRightCorner(m, m);
      const APFitResult ap = fit_ap_curve(width->powers, a, cov);
      out.write("ap_fit.txt", [&](std::ostream& os) { write_fit_report(os, ap.report, "a(P) fit"); });
      summary << "## a(P) model\n";
      summary_line(summary, "a1", ap.report, "a1", "1/(MHz mW)");
      summary_line(summary, "b1", ap.report, "b1", "mW");
      summary_line(summary, "c1", ap.report, "c1", "1/MHz");
      surface("ap", ap.report);
      results["ap"] = report_json(ap.report);
    } catch (const Error& e) {
      failed("ap", e);
    }
  }

  try {
    const ContrastFitResult c = global_contrast_fit(grid);
    out.write("contrast_fit.txt", [&](std::ostream& os) { write_fit_report(os, c.report, "global contrast fit"); });
    summary << "## contrast model\n";
    summary_line(summary, "theta", c.report, "theta", "");
    summary_line(summary, "gamma1/c", c.report, "g1_over_c_mw", "mW");
    summary_line(summary, "gamma1*gamma2", c.report, "g1g2_per_us2", "1/us^2");
    surface("contrast", c.report);
    results["contrast"] = report_json(c.report);
  } catch (const Error& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const SchemaError*>(&e)) throw;
    failed("contrast", e);
  }

  out.write("summary.txt", [&](std::ostream& os) { os << summary.str(); });
  out.write("summary.json", [&](std::ostream& os) { os << results.dump(2) << '\n'; });
  out.manifest("global-fit", t);
  return failures >= 3 || (!width && !results.contains("contrast")) ? kExitNumeric : kExitOk;
}

// --- sensitivity-map --------------------------------------------------------

struct MapOptions {
  Common common;
  ModelOptions model;
  std::vector<double> powers = numeric::logspace(0.02, 500.0, 20);
  std::vector<double> rabis = numeric::logspace(0.03, 3.0, 20);
  double rate_boost = 1.0;
  std::string conversion = "three-a";
  int threads = 1;
  double k_conv = 6.21e-3, p_sat_mw = 4.8e3, wavelength_nm = 670.0;
};

int cmd_sensitivity_map(MapOptions& o, OptionTable& t, std::ostream& log) {
  require_list(o.powers, "powers", true);
  require_list(o.rabis, "rabis", false);
  require(o.conversion == "three-a" || o.conversion == "exact", "--conversion must be three-a or exact");
  require(o.threads >= 0, "--threads must be >= 0");
  require(o.rate_boost > 0.0, "--rate-boost must be > 0");
  PhotonBudget budget{o.k_conv, o.p_sat_mw, o.wavelength_nm};
  SensitivityMapOptions mo;
  mo.rate_boost = o.rate_boost;
  mo.conversion = o.conversion == "exact" ? ContrastConversion::Exact : ContrastConversion::ThreeA;
  mo.threads = static_cast<unsigned>(o.threads);
  const SensitivityMap map = sensitivity_map(o.model.width({}), o.model.ap(), o.model.contrast(),
                                             budget, o.powers, o.rabis, mo);

  Outputs out(o.common.out, o.common.verbosity, log);
  out.write("sensitivity_columns.txt", [&](std::ostream& os) { write_sensitivity_columns(os, map); });
  out.write("sensitivity_matrix.txt", [&](std::ostream& os) { write_sensitivity_matrix(os, map); });
  out.write("argmin.txt", [&](std::ostream& os) {
    os << "# odmr-sensitivity-argmin v1\n";
    os << "power_mw = " << format_number(map.powers_mw[map.argmin_power]) << '\n';
    os << "rabi_mhz = " << format_number(map.rabis_mhz[map.argmin_rabi]) << '\n';
    os << "sensitivity_t_per_rthz = " << format_number(map.min_value()) << '\n';
    os << "cells = " << map.values.size() << '\n';
  });
  Json res;
  res["argmin_power_mw"] = map.powers_mw[map.argmin_power];
  res["argmin_rabi_mhz"] = map.rabis_mhz[map.argmin_rabi];
  res["min_sensitivity_t_per_rthz"] = map.min_value();
  out.manifest("sensitivity-map", t, res);
  return kExitOk;
}

// --- synth-grid -------------------------------------------------------------

struct SynthGridOptions {
  Common common;
  ModelOptions model;
  std::vector<double> powers = numeric::logspace(0.02, 500.0, 12);
  std::vector<double> rabis = numeric::logspace(0.03, 1.5, 8);
  double width_noise = 0.02;
  double amplitude_noise = 0.03;
  bool ap_zero = false;
};

int cmd_synth_grid(SynthGridOptions& o, OptionTable& t, std::ostream& log) {
  require_list(o.powers, "powers", true);
  require_list(o.rabis, "rabis", true);
  require(o.width_noise >= 0.0 && o.amplitude_noise >= 0.0, "noise levels must be >= 0");
  WidthModelParams w = o.model.width(o.powers);
  if (o.ap_zero) std::fill(w.a_over_g2.begin(), w.a_over_g2.end(), 0.0);
  const MeasurementGrid g = synth_grid(w, o.model.contrast(), o.powers, o.rabis,
                                       {o.width_noise, o.amplitude_noise}, o.common.seed);
  Outputs out(o.common.out, o.common.verbosity, log);
  out.write("grid.txt", [&](std::ostream& os) { write_grid(os, g); });
  out.manifest("synth-grid", t);
  return kExitOk;
}

int exit_code_for(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidParameter*>(&e) ||
      dynamic_cast<const ParseError*>(&e) || dynamic_cast<const SchemaError*>(&e)) {
    return kExitConfig;
  }
  return kExitNumeric;
}

void error_line(std::ostream& err, const std::string& kind, int code, const std::string& msg) {
  err << "error: kind=" << kind << " exit=" << code << " message=" << Json(msg).dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ODMR lineshape modelling, fitting and sensitivity maps", "odmr"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SimulateOptions sim;
  FitOptions fit;
  GlobalFitOptions glob;
  MapOptions map;
  SynthGridOptions synth;
  OptionTable t_sim, t_fit, t_glob, t_map, t_synth;

  auto* c_sim = app.add_subcommand("simulate", "simulate ODMR spectra from the spin models");
  add_common(t_sim, *c_sim, sim.common);
  t_sim.add(*c_sim, "model", sim.model, "two-level | five-level-fluorescence | five-level-ir");
  t_sim.add(*c_sim, "powers", sim.powers, "light powers (mW)");
  t_sim.add(*c_sim, "rabis", sim.rabis, "Rabi frequencies (MHz)");
  t_sim.add(*c_sim, "gamma1", sim.gamma1, "longitudinal rate (1/us)");
  t_sim.add(*c_sim, "gamma2", sim.gamma2, "transverse rate (1/us)");
  t_sim.add(*c_sim, "c-per-mw", sim.c_per_mw, "pump rate per mW (1/(us mW))");
  t_sim.add(*c_sim, "theta", sim.theta, "two-level readout asymmetry");
  t_sim.add(*c_sim, "gamma0", sim.gamma0, "excited-state decay (1/us)");
  t_sim.add(*c_sim, "gamma-f", sim.gamma_f, "singlet feeding (1/us)");
  t_sim.add(*c_sim, "gamma-s", sim.gamma_s, "singlet decay (1/us)");
  t_sim.add(*c_sim, "dnu-inh", sim.dnu_inh, "Lorentzian inhomogeneous FWHM (MHz)");
  t_sim.add(*c_sim, "center-mhz", sim.center_mhz, "resonance frequency (MHz)");
  t_sim.add(*c_sim, "span-mhz", sim.span_mhz, "scan range (MHz)");
  t_sim.add(*c_sim, "points", sim.points, "samples per spectrum");
  t_sim.add(*c_sim, "ahf", sim.ahf, "hyperfine splitting (MHz)");
  t_sim.add(*c_sim, "noise", sim.noise, "Gaussian noise, fraction of baseline");
  t_sim.add(*c_sim, "side-depth", sim.side_depth, "side-resonance depth, 0 for none");
  t_sim.add(*c_sim, "delta-side-mhz", sim.delta_side_mhz, "side-resonance offset (MHz)");
  t_sim.add(*c_sim, "side-hwhm", sim.side_hwhm, "side-resonance half width (MHz)");
  t_sim.add(*c_sim, "ir-absorption", sim.ir_absorption,
            "probe absorption at full singlet population (five-level-ir)");

  auto* c_fit = app.add_subcommand("fit", "fit triple-Lorentzian spectra (file or directory)");
  add_common(t_fit, *c_fit, fit.common);
  t_fit.add(*c_fit, "input", fit.input, "spectrum file or directory of spectra");
  t_fit.add(*c_fit, "ahf", fit.ahf, "hyperfine splitting (MHz)");
  t_fit.add(*c_fit, "exclude-side-mhz", fit.exclude_side_mhz, "side-resonance offset, 0 disables exclusion");
  t_fit.add(*c_fit, "exclude-width-mhz", fit.exclude_width_mhz, "width of each excluded window (MHz)");
  t_fit.add(*c_fit, "exclude-center-mhz", fit.exclude_center_mhz, "window centre, 0 uses the initial guess");
  t_fit.add(*c_fit, "grid-name", fit.grid_name, "grid file written in batch mode");

  auto* c_glob = app.add_subcommand("global-fit", "global width, a(P) and contrast fits of a grid");
  add_common(t_glob, *c_glob, glob.common);
  t_glob.add(*c_glob, "input", glob.input, "grid file");
  t_glob.add(*c_glob, "form", glob.form, "spin-flip term: rabi-squared | printed-linear");

  auto* c_map = app.add_subcommand("sensitivity-map", "shot-noise sensitivity over (P, f_R)");
  add_common(t_map, *c_map, map.common);
  map.model.add(t_map, *c_map);
  t_map.add(*c_map, "powers", map.powers, "light powers (mW)");
  t_map.add(*c_map, "rabis", map.rabis, "Rabi frequencies (MHz)");
  t_map.add(*c_map, "rate-boost", map.rate_boost, "photon-rate multiplier");
  t_map.add(*c_map, "conversion", map.conversion, "amplitude to contrast: three-a | exact");
  t_map.add(*c_map, "threads", map.threads, "worker threads, 0 for all cores");
  t_map.add(*c_map, "k-conv", map.k_conv, "fluorescence conversion slope");
  t_map.add(*c_map, "p-sat-mw", map.p_sat_mw, "fluorescence saturation power (mW)");
  t_map.add(*c_map, "wavelength-nm", map.wavelength_nm, "fluorescence wavelength (nm)");

  auto* c_synth = app.add_subcommand("synth-grid", "synthetic width/amplitude grid from the global models");
  add_common(t_synth, *c_synth, synth.common);
  synth.model.add(t_synth, *c_synth);
  t_synth.add(*c_synth, "powers", synth.powers, "light powers (mW)");
  t_synth.add(*c_synth, "rabis", synth.rabis, "Rabi frequencies (MHz)");
  t_synth.add(*c_synth, "width-noise", synth.width_noise, "relative width noise");
  t_synth.add(*c_synth, "amplitude-noise", synth.amplitude_noise, "relative amplitude noise");
  t_synth.add(*c_synth, "ap-zero", synth.ap_zero, "generate with a(P) = 0");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    error_line(err, "UsageError", kExitConfig, e.what());
    return kExitConfig;
  }

  auto with_config = [](OptionTable& t, const Common& c, const std::string& command) {
    if (!c.config.empty()) t.apply(load_json(c.config), command);
  };

  try {
    if (c_sim->parsed()) {
      with_config(t_sim, sim.common, "simulate");
      return cmd_simulate(sim, t_sim, out);
    }
    if (c_fit->parsed()) {
      with_config(t_fit, fit.common, "fit");
      return cmd_fit(fit, t_fit, out);
    }
    if (c_glob->parsed()) {
      with_config(t_glob, glob.common, "global-fit");
      return cmd_global_fit(glob, t_glob, out, err);
    }
    if (c_map->parsed()) {
      with_config(t_map, map.common, "sensitivity-map");
      return cmd_sensitivity_map(map, t_map, out);
    }
    if (c_synth->parsed()) {
      with_config(t_synth, synth.common, "synth-grid");
      return cmd_synth_grid(synth, t_synth, out);
    }
  } catch (const Error& e) {
    const int code = exit_code_for(e);
    error_line(err, e.kind(), code, e.what());
    return code;
  } catch (const std::exception& e) {
    error_line(err, "InternalError", kExitNumeric, e.what());
    return kExitNumeric;
  }
  error_line(err, "UsageError", kExitConfig, "no command given");
  return kExitConfig;
}

}  // namespace odmr::cli
