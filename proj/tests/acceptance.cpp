// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Usage: acceptance <path-to-odmr-binary>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"
#include "odmr/lineshape.hpp"
#include "odmr/numeric.hpp"
#include "odmr/sensitivity.hpp"
#include "odmr/spin_models.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace odmr;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int n, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << n << ": " << detail << '\n';
  if (!ok) ++failures;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

std::string g_tool;
fs::path g_scratch;

int tool(const std::string& args) {
  const std::string cmd = "\"" + g_tool + "\" " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream s;
  s << is.rdbuf();
  return s.str();
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// --- 1 ---------------------------------------------------------------------

void two_level_closed_forms() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  double worst_w = 0.0, worst_c = 0.0;
  for (int k = 0; k < 500; ++k) {
    TwoLevelParams p;
    p.gamma2 = oracle::log_uniform(rng, 0.05, 5.0);
    p.gamma1 = oracle::log_uniform(rng, 1e-4, 2.0 * p.gamma2);
    p.pump_rate = oracle::log_uniform(rng, 1e-3, 5.0);
    p.rabi_mhz = oracle::log_uniform(rng, 0.01, 5.0);
    const oracle::TwoLevel o{p.gamma1, p.gamma2, p.pump_rate, p.rabi_mhz, 0.0};
    auto signal = [&](double d) {
      auto x = o;
      x.det = d;
      return oracle::two_level_signal(x, p.theta);
    };
    const double w = two_level_width(p);
    const double numeric_w = oracle::fwhm(signal, w);
    const double depth = oracle::two_level_depth(o, p.theta);
    worst_w = std::max(worst_w, std::abs(w - numeric_w) / numeric_w);
    worst_c = std::max(worst_c, std::abs(two_level_contrast(p) - depth) / depth);
  }
  const double t = seconds_since(t0);
  report(1, worst_w < 1e-6 && worst_c < 1e-9 && t < 10.0,
         "500 two-level draws, max width error " + fmt(worst_w) + ", max contrast error " +
             fmt(worst_c) + ", " + fmt(t) + " s");
}

// --- 2 ---------------------------------------------------------------------

oracle::FiveLevel to_oracle(const FiveLevelParams& p) {
  return {p.gamma0, p.gamma_f, p.gamma_s, p.pump_rate_tilde, p.gamma1, p.gamma2, p.rabi_mhz, 0.0};
}

double numeric_five_fwhm(const FiveLevelParams& p, double hint) {
  return oracle::fwhm(
      [&](double d) {
        auto x = to_oracle(p);
        x.det = d;
        return oracle::five_level_fluorescence(x);
      },
      hint);
}

void five_level_regime() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1002);
  double worst = 0.0;
  bool all_in_regime = true;
  for (int k = 0; k < 100; ++k) {
    FiveLevelParams p;
    p.gamma0 = oracle::log_uniform(rng, 50.0, 150.0);
    p.gamma_f = p.gamma0 * oracle::log_uniform(rng, 1.0 / 1.03, 1.03);
    p.gamma_s = oracle::log_uniform(rng, 2.0, 20.0);
    p.pump_rate_tilde = p.gamma0 / 100.0 * oracle::log_uniform(rng, 1e-3, 1.0);
    p.gamma1 = p.gamma_s / 100.0 * oracle::log_uniform(rng, 1e-3, 1.0);
    p.gamma2 = oracle::log_uniform(rng, std::max(0.5 * p.gamma1, 0.1), 5.0);
    p.rabi_mhz = oracle::log_uniform(rng, 0.05, 3.0);
    const auto w = five_level_width(p);
    all_in_regime = all_in_regime && w.in_regime();
    worst = std::max(worst, std::abs(w.fwhm_mhz - numeric_five_fwhm(p, w.fwhm_mhz)) /
                                w.fwhm_mhz);
  }
  // outside the regime the diagnostic must fire while the exact solve still works
  int fired = 0, finite = 0;
  for (int k = 0; k < 20; ++k) {
    FiveLevelParams p;
    p.pump_rate_tilde = p.gamma0 * oracle::log_uniform(rng, 0.2, 2.0);
    p.rabi_mhz = oracle::log_uniform(rng, 0.05, 3.0);
    const auto w = five_level_width(p);
    if (!w.in_regime()) ++fired;
    if (std::isfinite(five_level_summary(p, FiveLevelReadout::Fluorescence).fwhm_mhz)) ++finite;
  }
  const double t = seconds_since(t0);
  report(2, worst < 0.01 && all_in_regime && fired == 20 && finite == 20 && t < 30.0,
         "100 in-regime five-level draws, max width error " + fmt(worst) +
             ", diagnostics fired on " + std::to_string(fired) + "/20 out-of-regime draws, " +
             fmt(t) + " s");
}

// --- 3 ---------------------------------------------------------------------

void readout_equivalence() {
  std::mt19937_64 rng(1003);
  double worst = 0.0, worst_center = 0.0;
  for (int k = 0; k < 100; ++k) {
    FiveLevelParams p;
    p.gamma0 = oracle::log_uniform(rng, 20.0, 200.0);
    p.gamma_f = oracle::log_uniform(rng, 20.0, 200.0);
    p.gamma_s = oracle::log_uniform(rng, 1.0, 20.0);
    p.pump_rate_tilde = oracle::log_uniform(rng, 1e-3, 20.0);
    p.gamma2 = oracle::log_uniform(rng, 0.1, 5.0);
    p.gamma1 = oracle::log_uniform(rng, 1e-4, p.gamma2);
    p.rabi_mhz = oracle::log_uniform(rng, 0.02, 3.0);
    const double wf = five_level_summary(p, FiveLevelReadout::Fluorescence).fwhm_mhz;
    const double wi = five_level_summary(p, FiveLevelReadout::IrAbsorption).fwhm_mhz;
    worst = std::max(worst, std::abs(wf - wi) / wf);
    // centres: both readouts are even in the detuning
    for (auto readout : {FiveLevelReadout::Fluorescence, FiveLevelReadout::IrAbsorption}) {
      auto a = p, b = p;
      a.detuning_mhz = 0.37 * wf;
      b.detuning_mhz = -0.37 * wf;
      const double va = five_level_readout(a, readout), vb = five_level_readout(b, readout);
      worst_center = std::max(worst_center, std::abs(va - vb) / std::abs(va));
    }
  }
  report(3, worst < 1e-9 && worst_center < 1e-12,
         "100 draws, max relative FWHM difference " + fmt(worst) + ", max asymmetry " +
             fmt(worst_center));
}

// --- 4 ---------------------------------------------------------------------

void narrowing_factor() {
  const auto t0 = Clock::now();
  const std::vector<double> powers{0.02, 500.0};
  const auto p = WidthModelParams::reference(powers);
  const double factor =
      total_width_model(p, 0.02, 0, 1.1) / total_width_model(p, 500.0, 1, 1.1);
  report(4, factor >= 2.0 && factor <= 3.0 && seconds_since(t0) < 1.0,
         "width ratio 0.02 mW / 500 mW at 1.1 MHz = " + fmt(factor));
}

// --- 5 ---------------------------------------------------------------------

void width_additivity() {
  std::mt19937_64 rng(1005);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const double a = oracle::log_uniform(rng, 0.1, 50.0);
    const double b = oracle::log_uniform(rng, 0.1, 50.0);
    InhomogeneousDist d;
    d.fwhm_mhz = a;
    LineshapeSummary h;
    h.fwhm_mhz = b;
    h.contrast = 0.01;
    worst = std::max(worst, std::abs(ensemble_fwhm(d, h) - (a + b)) / (a + b));
  }
  report(5, worst < 5e-3, "50 Lorentzian pairs, max relative error " + fmt(worst));
}

// --- 6 ---------------------------------------------------------------------

void global_fit_recovery() {
  const auto t0 = Clock::now();
  const fs::path dir = g_scratch / "c6";
  const int a = tool("synth-grid --seed 20261019 --verbosity 0 --out " + q(dir / "grid"));
  const int b = tool("global-fit --verbosity 0 --input " + q(dir / "grid" / "grid.txt") +
                     " --out " + q(dir / "fit"));
  const double t = seconds_since(t0);
  if (a != 0 || b != 0) {
    report(6, false, "CLI exit codes " + std::to_string(a) + ", " + std::to_string(b));
    return;
  }
  const auto j = nlohmann::json::parse(slurp(dir / "fit" / "summary.json"));
  auto val = [&](const char* c, const std::string& n) {
    return j[c]["params"][n]["value"].get<double>();
  };

  const double dnu = val("width", "dnu_inh_mhz");
  const double ratio = val("width", "ratio_g1_g2");
  const double f0 = val("width", "f0_mhz");
  const double theta = val("contrast", "theta");
  const bool recovered = std::abs(dnu - 3.08) / 3.08 < 0.05 &&
                         std::abs(ratio - 0.0014) / 0.0014 < 0.5 &&
                         std::abs(f0 - 1.0) < 0.15 && std::abs(theta - 22.9e-3) / 22.9e-3 < 0.1;

  std::map<std::string, double> truth{{"dnu_inh_mhz", 3.08}, {"ratio_g1_g2", 0.0014},
                                      {"c_over_g2", 0.018},  {"p0_mw", 39.0},
                                      {"f0_mhz", 1.0},       {"a1", 0.5},
                                      {"b1", 0.5},           {"c1", 0.074},
                                      {"theta", 22.9e-3},    {"g1_over_c_mw", 0.71},
                                      {"g1g2_per_us2", 0.0047}};
  const auto powers = j["width"]["powers_mw"].get<std::vector<double>>();
  for (std::size_t i = 0; i < powers.size(); ++i) {
    truth["a_over_g2[" + std::to_string(i) + "]"] = a_of_p(APModelParams{}, powers[i]);
  }
  double worst_pull = 0.0;
  std::string worst_name;
  int checked = 0;
  for (const char* campaign : {"width", "ap", "contrast"}) {
    for (const auto& [name, entry] : j[campaign]["params"].items()) {
      if (entry["ci68"].is_null() || !truth.count(name)) continue;
      const double v = entry["value"].get<double>(), ci = entry["ci68"].get<double>();
      if (!(ci / std::abs(v) < 0.5)) continue;
      ++checked;
      const double pull = (v - truth[name]) / ci;
      if (std::abs(pull) > std::abs(worst_pull)) {
        worst_pull = pull;
        worst_name = name;
      }
    }
  }
  report(6, recovered && std::abs(worst_pull) <= 3.0 && checked > 0 && t < 60.0,
         "dnu_inh " + fmt(dnu) + " MHz, gamma1/gamma2 " + fmt(ratio) + ", f0 " + fmt(f0) +
             " MHz, theta " + fmt(theta) + ", largest pull " + fmt(worst_pull) + " (" +
             worst_name + ") over " + std::to_string(checked) + " parameters, " + fmt(t) + " s");
}

// --- 7 ---------------------------------------------------------------------

void photon_budget() {
  const double r = photon_rate(PhotonBudget{}, 1.0);
  report(7, std::abs(r - 2.1e13) / 2.1e13 < 0.02, "photon rate at 1 mW = " + fmt(r) + " /s");
}

// --- 8 ---------------------------------------------------------------------

void sensitivity_optimum() {
  const auto t0 = Clock::now();
  const auto powers = numeric::logspace(0.02, 500.0, 20);
  const auto rabis = numeric::logspace(0.03, 3.0, 20);
  const auto map = sensitivity_map(WidthModelParams{}, APModelParams{}, ContrastModelParams{},
                                   PhotonBudget{}, powers, rabis);
  const double p = map.powers_mw[map.argmin_power];
  const double f = map.rabis_mhz[map.argmin_rabi];
  const double s = map.min_value();
  const double t = seconds_since(t0);
  report(8,
         p == 500.0 && f >= 0.3 && f <= 1.2 && s >= 0.05e-9 && s <= 0.2e-9 && t < 10.0 &&
             map.values.size() >= 100,
         "argmin at " + fmt(p) + " mW, " + fmt(f) + " MHz, min " + fmt(s * 1e9) +
             " nT/sqrt(Hz), " + fmt(t) + " s");
}

// --- 9 ---------------------------------------------------------------------

void curvature_sign() {
  const auto p = WidthModelParams::reference(std::vector<double>{0.02});
  auto curvature = [&](double a) {
    const double h = 1e-2, f = 0.5;
    return (total_width(p, a, 0.02, f + h) - 2.0 * total_width(p, a, 0.02, f) +
            total_width(p, a, 0.02, f - h)) /
           (h * h);
  };
  // a(0.02 mW) for every corner of the reference one-sigma box of a1, b1, c1
  double a_lo = 1e300, a_hi = 0.0;
  for (double a1 : {0.3, 0.5, 0.7}) {
    for (double b1 : {0.3, 0.5, 0.7}) {
      for (double c1 : {0.067, 0.074, 0.081}) {
        const double a = a_of_p({a1, b1, c1}, 0.02);
        a_lo = std::min(a_lo, a);
        a_hi = std::max(a_hi, a);
      }
    }
  }
  bool negative = a_lo > 0.05;
  double worst = -1e300;
  for (double a : numeric::linspace(a_lo, a_hi, 25)) {
    const double c = curvature(a);
    worst = std::max(worst, c);
    negative = negative && c < 0.0;
  }
  const double flat = curvature(0.0);
  // with a = 0 the width is linear in f_R; allow the central-difference roundoff only
  report(9, negative && flat >= -1e-9,
         "a(0.02 mW) in [" + fmt(a_lo) + ", " + fmt(a_hi) + "] /MHz, largest curvature " +
             fmt(worst) + " /MHz, with a = 0 it is " + fmt(flat));
}

// --- 10 --------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return files;
}

void determinism() {
  const fs::path dir = g_scratch / "c10";
  const fs::path spectra = dir / "inputs" / "spectra";
  const fs::path grid = dir / "inputs" / "grid";
  tool("simulate --powers 1,10 --rabis 0.3,0.9 --seed 4 --verbosity 0 --out " + q(spectra));
  tool("synth-grid --seed 4 --verbosity 0 --out " + q(grid));
  const std::vector<std::pair<std::string, std::string>> commands{
      {"simulate", "simulate --model five-level-ir --powers 1,10 --rabis 0.3,0.9 --seed 7"},
      {"fit", "fit --input " + q(spectra)},
      {"global-fit", "global-fit --input " + q(grid / "grid.txt")},
      {"sensitivity-map", "sensitivity-map --threads 4"},
      {"synth-grid", "synth-grid --seed 9"}};
  int identical = 0;
  std::string bad;
  for (const auto& [name, args] : commands) {
    const fs::path out = dir / name;
    const std::string full = args + " --verbosity 0 --out " + q(out);
    const int r1 = tool(full);
    const auto first = snapshot(out);
    fs::remove_all(out);
    const int r2 = tool(full);
    const auto second = snapshot(out);
    if (r1 == 0 && r2 == 0 && !first.empty() && first == second) {
      ++identical;
    } else {
      bad += " " + name;
    }
  }
  report(10, identical == static_cast<int>(commands.size()),
         std::to_string(identical) + "/" + std::to_string(commands.size()) +
             " commands byte-identical across reruns" + (bad.empty() ? "" : ", differing:" + bad));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <odmr-binary>\n";
    return 2;
  }
  g_tool = fs::absolute(argv[1]).string();
  g_scratch = fs::temp_directory_path() / ("odmr_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(g_scratch);
  fs::create_directories(g_scratch);

  two_level_closed_forms();
  five_level_regime();
  readout_equivalence();
  narrowing_factor();
  width_additivity();
  global_fit_recovery();
  photon_budget();
  sensitivity_optimum();
  curvature_sign();
  determinism();

  fs::remove_all(g_scratch);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << '\n';
  return failures == 0 ? 0 : 1;
}
