#include "odmr/spin_models.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "odmr/constants.hpp"
#include "odmr/error.hpp"
#include "odmr/numeric.hpp"

namespace odmr {

using constants::kPi;
using constants::kTwoPi;
using cd = std::complex<double>;

namespace {

constexpr cd kI{0.0, 1.0};

void require_rate(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0) {
    throw InvalidParameter(std::string(name) + " must be finite and >= 0");
  }
}

template <int N>
Eigen::Matrix<double, N, 1> solve_steady_state(const Eigen::Matrix<double, N, N>& m,
                                                const Eigen::Matrix<double, N, 1>& rhs,
                                                const char* model) {
  Eigen::FullPivLU<Eigen::Matrix<double, N, N>> lu(m);
  lu.setThreshold(1e-14);
  if (lu.rank() < N) {
    throw DegenerateSystem(std::string(model) + ": steady-state system is singular (rank " +
                           std::to_string(lu.rank()) + " of " + std::to_string(N) + ")");
  }
  Eigen::Matrix<double, N, 1> x = lu.solve(rhs);
  // one step of iterative refinement
  x += lu.solve(rhs - m * x);
  return x;
}

double clamp_population(double v) {
  // rounding can leave populations a few ulps outside [0, 1]
  if (v < 0.0 && v > -1e-13) return 0.0;
  if (v > 1.0 && v < 1.0 + 1e-13) return 1.0;
  return v;
}

// Width hint for numeric scans; any positive value of the right order works.
double five_level_width_hint(const FiveLevelParams& p) {
  const double g2e = p.gamma2_eff();
  const double rabi_term = p.rabi_mhz * p.rabi_mhz * 4.0 * g2e /
                           std::max(p.gamma1 + 0.25 * p.pump_rate_tilde, 1e-300);
  const double w = std::sqrt(g2e * g2e / (kPi * kPi) + rabi_term);
  return std::isfinite(w) && w > 0.0 ? w : 1.0;
}

}  // namespace

double LineshapeSummary::at(double detuning_mhz) const noexcept {
  const double hw = 0.5 * fwhm_mhz;
  const double lor = hw * hw / (detuning_mhz * detuning_mhz + hw * hw);
  return baseline * (peak ? 1.0 + contrast * lor : 1.0 - contrast * lor);
}

double SteadyState::trace() const noexcept {
  double t = 0.0;
  for (std::size_t i = 0; i < level_count; ++i) t += populations[i];
  return t;
}

void TwoLevelParams::validate() const {
  require_rate(gamma1, "gamma1");
  require_rate(gamma2, "gamma2");
  require_rate(pump_rate, "pump_rate");
  require_rate(rabi_mhz, "rabi_mhz");
  if (!std::isfinite(detuning_mhz)) throw InvalidParameter("detuning_mhz must be finite");
  if (!(theta >= 0.0 && theta <= 1.0)) throw InvalidParameter("theta must lie in [0, 1]");
  if (gamma2 < 0.5 * gamma1) throw InvalidParameter("gamma2 must be >= gamma1 / 2 (T2 <= 2 T1)");
}

void FiveLevelParams::validate() const {
  require_rate(gamma0, "gamma0");
  require_rate(gamma_f, "gamma_f");
  require_rate(gamma_s, "gamma_s");
  require_rate(pump_rate_tilde, "pump_rate_tilde");
  require_rate(gamma1, "gamma1");
  require_rate(gamma2, "gamma2");
  require_rate(rabi_mhz, "rabi_mhz");
  if (!std::isfinite(detuning_mhz)) throw InvalidParameter("detuning_mhz must be finite");
}

// --- two-level ---------------------------------------------------------------

SteadyState two_level_steady_state(const TwoLevelParams& p) {
  p.validate();
  const double omega = kTwoPi * p.rabi_mhz;
  const double delta = kTwoPi * p.detuning_mhz;
  const double g2e = p.gamma2_eff();
  if (g2e == 0.0 && omega > 0.0) {
    throw DegenerateSystem("two-level: no steady state for a driven coherence without dephasing");
  }

  // unknowns: rho00, rho11, Re rho01, Im rho01
  Eigen::Matrix4d m;
  m << -0.5 * p.gamma1, 0.5 * p.gamma1 + p.pump_rate, 0.0, omega,  //
      1.0, 1.0, 0.0, 0.0,                                           // trace
      0.0, 0.0, -g2e, -delta,                                       //
      -0.5 * omega, 0.5 * omega, delta, -g2e;
  const Eigen::Vector4d rhs(0.0, 1.0, 0.0, 0.0);
  const Eigen::Vector4d x = solve_steady_state<4>(m, rhs, "two-level");

  SteadyState s;
  s.level_count = 2;
  s.populations[0] = clamp_population(x[0]);
  s.populations[1] = clamp_population(x[1]);
  s.coherence01 = {x[2], x[3]};
  return s;
}

std::array<cd, 4> two_level_derivatives(const TwoLevelParams& p, const SteadyState& s) {
  const double omega = kTwoPi * p.rabi_mhz;
  const double delta = kTwoPi * p.detuning_mhz;
  const double g2e = p.gamma2_eff();
  const double r00 = s.population(Level::Ground0);
  const double r11 = s.population(Level::Ground1);
  const cd r01 = s.coherence01;
  const cd r10 = s.coherence10();

  const cd d00 = -kI * omega / 2.0 * (r01 - r10) - p.gamma1 / 2.0 * (r00 - r11) + p.pump_rate * r11;
  const cd d11 = kI * omega / 2.0 * (r01 - r10) - p.gamma1 / 2.0 * (r11 - r00) - p.pump_rate * r11;
  const cd d01 = -(g2e - kI * delta) * r01 + kI * omega / 2.0 * (r11 - r00);
  const cd d10 = -(g2e + kI * delta) * r10 - kI * omega / 2.0 * (r11 - r00);
  return {d00, d11, d01, d10};
}

double two_level_signal(const TwoLevelParams& p) {
  const SteadyState s = two_level_steady_state(p);
  return s.population(Level::Ground0) + (1.0 - 2.0 * p.theta) * s.population(Level::Ground1);
}

double two_level_baseline(const TwoLevelParams& p) {
  p.validate();
  const double total = p.gamma1 + p.pump_rate;
  if (total == 0.0) return 1.0 - p.theta;  // no relaxation at all: unpolarized limit
  return 1.0 - p.theta * p.gamma1 / total;
}

double two_level_width(const TwoLevelParams& p) {
  p.validate();
  const double g2e = p.gamma2_eff();
  if (!(g2e > 0.0)) throw InvalidParameter("two_level_width: gamma2_eff must be > 0");
  const double longitudinal = p.gamma1 + p.pump_rate;
  const double f2 = p.rabi_mhz * p.rabi_mhz;
  if (longitudinal == 0.0) {
    if (f2 > 0.0) throw DegenerateSystem("two_level_width: gamma1 + pump_rate = 0 under drive");
    return g2e / kPi;
  }
  return std::sqrt(g2e * g2e / (kPi * kPi) + 4.0 * g2e / longitudinal * f2);
}

double two_level_contrast(const TwoLevelParams& p) {
  p.validate();
  const double omega2 = std::pow(kTwoPi * p.rabi_mhz, 2);
  const double pump_term = p.pump_rate + p.gamma1 * (1.0 - p.theta);
  if (p.pump_rate == 0.0 || omega2 == 0.0 || pump_term == 0.0) return 0.0;
  const double polarization = p.pump_rate / pump_term;
  const double saturation = omega2 / (omega2 + p.gamma2_eff() * (p.gamma1 + p.pump_rate));
  return p.theta * polarization * saturation;
}

LineshapeSummary two_level_summary(const TwoLevelParams& p) {
  return {two_level_contrast(p), two_level_width(p), two_level_baseline(p), false};
}

double two_level_ensemble_contrast(double theta, double gamma1, double gamma2, double c_per_mw,
                                   double power_mw, double rabi_mhz) {
  const double pump = c_per_mw * power_mw;
  const double omega2 = std::pow(kTwoPi * rabi_mhz, 2);
  const double pump_term = pump + gamma1 * (1.0 - theta);
  if (pump == 0.0 || omega2 == 0.0 || pump_term == 0.0) return 0.0;
  return 0.25 * theta * pump / pump_term * omega2 / (omega2 + gamma2 * (gamma1 + pump));
}

// --- five-level --------------------------------------------------------------

SteadyState five_level_steady_state(const FiveLevelParams& p) {
  p.validate();
  const double omega = kTwoPi * p.rabi_mhz;
  const double delta = kTwoPi * p.detuning_mhz;
  const double g2e = p.gamma2_eff();
  const double pump = p.pump_rate_tilde;
  if (g2e == 0.0 && omega > 0.0) {
    throw DegenerateSystem("five-level: no steady state for a driven coherence without dephasing");
  }

  // unknowns: rho00, rho11, Re rho01, Im rho01, rho_e0e0, rho_e1e1, rho_ss
  Eigen::Matrix<double, 7, 7> m;
  m << -0.5 * p.gamma1 - pump, 0.5 * p.gamma1, 0.0, omega, p.gamma0, 0.0, 0.5 * p.gamma_s,  //
      1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0,                                                   //
      0.0, 0.0, -g2e, -delta, 0.0, 0.0, 0.0,                                               //
      -0.5 * omega, 0.5 * omega, delta, -g2e, 0.0, 0.0, 0.0,                               //
      pump, 0.0, 0.0, 0.0, -p.gamma0, 0.0, 0.0,                                            //
      0.0, pump, 0.0, 0.0, 0.0, -(p.gamma0 + p.gamma_f), 0.0,                              //
      0.0, 0.0, 0.0, 0.0, 0.0, p.gamma_f, -p.gamma_s;
  Eigen::Matrix<double, 7, 1> rhs = Eigen::Matrix<double, 7, 1>::Zero();
  rhs[1] = 1.0;
  const auto x = solve_steady_state<7>(m, rhs, "five-level");

  SteadyState s;
  s.level_count = 5;
  s.populations = {clamp_population(x[0]), clamp_population(x[1]), clamp_population(x[4]),
                   clamp_population(x[5]), clamp_population(x[6])};
  s.coherence01 = {x[2], x[3]};
  return s;
}

std::array<cd, 7> five_level_derivatives(const FiveLevelParams& p, const SteadyState& s) {
  const double omega = kTwoPi * p.rabi_mhz;
  const double delta = kTwoPi * p.detuning_mhz;
  const double g2e = p.gamma2_eff();
  const double pump = p.pump_rate_tilde;
  const double r00 = s.population(Level::Ground0);
  const double r11 = s.population(Level::Ground1);
  const double re0 = s.population(Level::Excited0);
  const double re1 = s.population(Level::Excited1);
  const double rss = s.population(Level::Singlet);
  const cd r01 = s.coherence01;
  const cd r10 = s.coherence10();

  const cd d00 = -kI * omega / 2.0 * (r01 - r10) - p.gamma1 / 2.0 * (r00 - r11) - pump * r00 +
                 p.gamma0 * re0 + p.gamma_s / 2.0 * rss;
  const cd d11 = kI * omega / 2.0 * (r01 - r10) - p.gamma1 / 2.0 * (r11 - r00) - pump * r11 +
                 p.gamma0 * re1 + p.gamma_s / 2.0 * rss;
  const cd d01 = -(g2e - kI * delta) * r01 + kI * omega / 2.0 * (r11 - r00);
  const cd d10 = -(g2e + kI * delta) * r10 - kI * omega / 2.0 * (r11 - r00);
  const cd de0 = pump * r00 - p.gamma0 * re0;
  const cd de1 = pump * r11 - p.gamma0 * re1 - p.gamma_f * re1;
  const cd dss = p.gamma_f * re1 - p.gamma_s * rss;
  return {d00, d11, d01, d10, de0, de1, dss};
}

double five_level_fluorescence(const FiveLevelParams& p) {
  if (!(p.gamma0 + p.gamma_f > 0.0)) {
    throw InvalidParameter("five_level_fluorescence: gamma0 + gamma_f must be > 0");
  }
  const SteadyState s = five_level_steady_state(p);
  return s.population(Level::Excited0) +
         p.gamma0 / (p.gamma0 + p.gamma_f) * s.population(Level::Excited1);
}

double five_level_ir_absorption(const FiveLevelParams& p) {
  return five_level_steady_state(p).population(Level::Singlet);
}

double five_level_readout(const FiveLevelParams& p, FiveLevelReadout readout) {
  return readout == FiveLevelReadout::Fluorescence ? five_level_fluorescence(p)
                                                   : five_level_ir_absorption(p);
}

FiveLevelWidth five_level_width(const FiveLevelParams& p) {
  p.validate();
  FiveLevelWidth out;
  const double pump = p.pump_rate_tilde;
  const double g2e = p.gamma2_eff();
  if (!(g2e > 0.0)) throw InvalidParameter("five_level_width: gamma2_eff must be > 0");

  constexpr double kFires = 0.1;
  if (p.gamma0 > 0.0 && pump / p.gamma0 > kFires) {
    out.violations.push_back({"pump_rate_tilde << gamma0", pump / p.gamma0});
  } else if (p.gamma0 == 0.0 && pump > 0.0) {
    out.violations.push_back({"pump_rate_tilde << gamma0", INFINITY});
  }
  if (p.gamma_s > 0.0 && p.gamma1 / p.gamma_s > kFires) {
    out.violations.push_back({"gamma1 << gamma_s", p.gamma1 / p.gamma_s});
  } else if (p.gamma_s == 0.0) {
    out.violations.push_back({"gamma1 << gamma_s", INFINITY});
  }
  if (p.gamma0 > 0.0 && p.gamma_f > 0.0) {
    // the closed form assumes equal decay out of both excited states; a few percent of
    // mismatch already costs about 1% in width
    constexpr double kFeedingMismatch = 0.03;
    const double mismatch = std::abs(p.gamma_f / p.gamma0 - 1.0);
    if (mismatch > kFeedingMismatch) out.violations.push_back({"gamma_f ~ gamma0", mismatch});
  }

  const double longitudinal = p.gamma1 + 0.25 * pump;
  const double f2 = p.rabi_mhz * p.rabi_mhz;
  if (longitudinal == 0.0) {
    if (f2 > 0.0) throw DegenerateSystem("five_level_width: gamma1 + pump/4 = 0 under drive");
    out.fwhm_mhz = g2e / kPi;
    return out;
  }
  const double saturation = pump == 0.0 ? 1.0 : 1.0 + pump / (4.0 * p.gamma_s);
  out.fwhm_mhz = std::sqrt(g2e * g2e / (kPi * kPi) + 4.0 * g2e * saturation / longitudinal * f2);
  return out;
}

double five_level_width_from_power(double gamma1, double gamma2, double c_per_mw, double power_mw,
                                   double p0_mw, double rabi_mhz) {
  const double g2e = gamma2 + 2.0 * c_per_mw * power_mw;  // gamma2 + (4 c P) / 2
  const double longitudinal = gamma1 + c_per_mw * power_mw;
  if (longitudinal == 0.0) {
    if (rabi_mhz > 0.0) throw DegenerateSystem("five_level_width_from_power: no relaxation");
    return g2e / kPi;
  }
  return std::sqrt(g2e * g2e / (kPi * kPi) +
                   4.0 * g2e * (1.0 + power_mw / p0_mw) / longitudinal * rabi_mhz * rabi_mhz);
}

LineshapeSummary five_level_summary(const FiveLevelParams& p, FiveLevelReadout readout) {
  const double hint = five_level_width_hint(p);
  auto at = [&](double det) {
    FiveLevelParams q = p;
    q.detuning_mhz = det;
    return five_level_readout(q, readout);
  };
  // far off resonance the drive drops out, which is the undriven steady state
  FiveLevelParams undriven = p;
  undriven.rabi_mhz = 0.0;
  undriven.detuning_mhz = 0.0;
  const double baseline = five_level_readout(undriven, readout);
  const double center = at(0.0);
  LineshapeSummary out;
  out.baseline = baseline;
  out.peak = readout == FiveLevelReadout::IrAbsorption;
  const double depth = std::abs(center - baseline);
  if (baseline == 0.0 || depth <= 1e-15 * std::abs(baseline)) {
    out.contrast = 0.0;
    out.fwhm_mhz = five_level_width(p).fwhm_mhz;
    return out;
  }
  out.contrast = depth / std::abs(baseline);
  out.fwhm_mhz = numeric::symmetric_fwhm(at, 0.0, baseline, hint, 1e-14);
  return out;
}

}  // namespace odmr
