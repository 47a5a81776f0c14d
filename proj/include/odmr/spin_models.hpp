#pragma once

#include <array>
#include <complex>
#include <string>
#include <vector>

namespace odmr {

// Driven two-level system {|0>, |1>} with optical pumping into |0>.
// Rates in 1/us, frequencies in MHz. The readout asymmetry theta is
// (alpha - beta) / (2 alpha) for a signal alpha*rho00 + beta*rho11.
struct TwoLevelParams {
  double gamma1 = 0.001;
  double gamma2 = 1.0;
  double pump_rate = 0.0;
  double rabi_mhz = 0.0;
  double detuning_mhz = 0.0;
  double theta = 22.9e-3;

  // pump-broadened transverse rate gamma2 + pump_rate / 2
  double gamma2_eff() const noexcept { return gamma2 + 0.5 * pump_rate; }
  void validate() const;
};

// Five-level model {|0>, |1>, |e0>, |e1>, |s>}. Defaults are the realistic
// decay rates 1/(12 ns), 1/(12 ns) and 1/(200 ns).
struct FiveLevelParams {
  double gamma0 = 1.0 / 0.012;
  double gamma_f = 1.0 / 0.012;
  double gamma_s = 1.0 / 0.200;
  double pump_rate_tilde = 0.0;
  double gamma1 = 0.001;
  double gamma2 = 1.0;
  double rabi_mhz = 0.0;
  double detuning_mhz = 0.0;

  double gamma2_eff() const noexcept { return gamma2 + 0.5 * pump_rate_tilde; }
  void validate() const;
};

enum class Level : std::size_t { Ground0 = 0, Ground1, Excited0, Excited1, Singlet };

struct SteadyState {
  std::array<double, 5> populations{};  // indexed by Level; unused levels are 0
  std::size_t level_count = 2;
  std::complex<double> coherence01{};

  double population(Level l) const noexcept { return populations[static_cast<std::size_t>(l)]; }
  std::complex<double> coherence10() const noexcept { return std::conj(coherence01); }
  double trace() const noexcept;
};

// Homogeneous Lorentzian S(d) = baseline * (1 -+ C (w/2)^2 / (d^2 + (w/2)^2)),
// a dip unless `peak` is set (IR absorption rises on resonance).
struct LineshapeSummary {
  double contrast = 0.0;
  double fwhm_mhz = 1.0;
  double baseline = 1.0;
  bool peak = false;

  double at(double detuning_mhz) const noexcept;
};

// --- two-level model -------------------------------------------------------

SteadyState two_level_steady_state(const TwoLevelParams& p);

// Time derivatives of rho00, rho11, rho01, rho10 evaluated at `s`; all
// vanish at the steady state. Returned as {d00, d11, d01, d10}.
std::array<std::complex<double>, 4> two_level_derivatives(const TwoLevelParams& p,
                                                          const SteadyState& s);

// Readout rho00 + (1 - 2 theta) rho11, i.e. alpha = 1.
double two_level_signal(const TwoLevelParams& p);
double two_level_baseline(const TwoLevelParams& p);

// FWHM in MHz of the power- and pump-broadened resonance.
double two_level_width(const TwoLevelParams& p);

double two_level_contrast(const TwoLevelParams& p);

LineshapeSummary two_level_summary(const TwoLevelParams& p);

// Contrast of an ensemble where only one of the four NV orientations is
// resonant, with pump rate c*P and light-independent dephasing gamma2.
double two_level_ensemble_contrast(double theta, double gamma1, double gamma2,
                                   double c_per_mw, double power_mw, double rabi_mhz);

// --- five-level model ------------------------------------------------------

SteadyState five_level_steady_state(const FiveLevelParams& p);

// {d00, d11, d01, d10, de0e0, de1e1, dss}
std::array<std::complex<double>, 7> five_level_derivatives(const FiveLevelParams& p,
                                                           const SteadyState& s);

// Triplet fluorescence rho_e0e0 + gamma0 / (gamma0 + gamma_f) rho_e1e1.
double five_level_fluorescence(const FiveLevelParams& p);

// Singlet population, proportional to the IR absorption.
double five_level_ir_absorption(const FiveLevelParams& p);

struct RegimeViolation {
  std::string assumption;
  double ratio;  // how far the assumption is from holding (> 0.1 fires)
};

struct FiveLevelWidth {
  double fwhm_mhz = 0.0;
  std::vector<RegimeViolation> violations;
  bool in_regime() const noexcept { return violations.empty(); }
};

// Closed-form five-level FWHM valid for gamma_f ~ gamma0, pump << gamma0 and
// gamma1 << gamma_s. Violations are diagnostics, never errors.
FiveLevelWidth five_level_width(const FiveLevelParams& p);

// The same width with excitation rate 4 c P and saturation power P0 = gamma_s / c.
double five_level_width_from_power(double gamma1, double gamma2, double c_per_mw,
                                   double power_mw, double p0_mw, double rabi_mhz);

// Exact (numeric) lineshape parameters of the five-level readouts. The
// resonance is always centred at zero detuning.
enum class FiveLevelReadout { Fluorescence, IrAbsorption };
double five_level_readout(const FiveLevelParams& p, FiveLevelReadout readout);
LineshapeSummary five_level_summary(const FiveLevelParams& p, FiveLevelReadout readout);

}  // namespace odmr
