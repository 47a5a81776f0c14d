#pragma once

#include <span>
#include <vector>

#include "odmr/spin_models.hpp"

namespace odmr {

// Distribution P(nu0) of resonance frequencies across the ensemble.
enum class DistributionKind { Lorentzian, Gaussian };

struct InhomogeneousDist {
  DistributionKind kind = DistributionKind::Lorentzian;
  double fwhm_mhz = 3.08;
  double center_mhz = 0.0;

  double sigma_mhz() const noexcept;  // Gaussian standard deviation
  double density(double nu0_mhz) const noexcept;
  void validate() const;
};

// Ensemble-averaged signal at `nu_mhz`: the homogeneous lineshape centred on
// each nu0 weighted by P(nu0). Evaluated by adaptive quadrature.
double ensemble_signal(const InhomogeneousDist& dist, const LineshapeSummary& homogeneous,
                       double nu_mhz);

// Sampled ensemble signal. The grid must be strictly increasing, span at least
// 20 combined FWHM around the centre and have spacing <= min(FWHM) / 20;
// GridTooCoarse otherwise.
std::vector<double> convolve_inhomogeneous(const InhomogeneousDist& dist,
                                           const LineshapeSummary& homogeneous,
                                           std::span<const double> grid_mhz);

// FWHM of the ensemble lineshape located by bisection on ensemble_signal.
double ensemble_fwhm(const InhomogeneousDist& dist, const LineshapeSummary& homogeneous);

// Lorentzian distribution convolved with a Lorentzian line: widths add.
inline double lorentzian_total_width(double dnu_inh_mhz, double homogeneous_fwhm_mhz) {
  return dnu_inh_mhz + homogeneous_fwhm_mhz;
}

// Ensemble width with light-independent dephasing, Lorentzian P(nu0):
// dnu_inh + sqrt((gamma2/pi)^2 + 4 gamma2 f_R^2 / (gamma1 + pump)).
double ensemble_width_with_dephasing(double dnu_inh_mhz, double gamma2, double gamma1,
                                     double pump_rate, double rabi_mhz);

// Same without the gamma2/pi term: dnu_inh + f_R sqrt(4 gamma2 / (gamma1 + pump)).
double approximate_total_width(double dnu_inh_mhz, double gamma2, double gamma1,
                               double pump_rate, double rabi_mhz);

// --- NV-P1 spin flips and the global width model --------------------------

// The printed global width formula carries a(P) f_R in the spin-flip term,
// while the spin-flip rate itself is a(P) f_R^2 / (1 + f_R^2 / f0^2).
enum class SpinFlipForm { RabiSquared, PrintedLinear };

// MW-induced NV-P1 spin-flip rate in 1/us.
double nv_p1_rate(double a_over_g2, double gamma2, double rabi_mhz, double f0_mhz,
                  SpinFlipForm form = SpinFlipForm::RabiSquared);

struct APModelParams {
  double a1 = 0.5;    // 1/(MHz mW)
  double b1 = 0.5;    // mW
  double c1 = 0.074;  // 1/MHz
};

// Empirical light-power dependence a1 P / (1 + P / b1) + c1 of a(P)/gamma2.
double a_of_p(const APModelParams& params, double power_mw);

struct WidthModelParams {
  double dnu_inh_mhz = 3.08;
  double ratio_g1_g2 = 0.0014;
  std::vector<double> a_over_g2;  // one per distinct light power
  double c_over_g2 = 0.018;       // 1/mW
  double p0_mw = 39.0;
  double f0_mhz = 1.0;
  SpinFlipForm form = SpinFlipForm::RabiSquared;

  // Reference sample values, a(P)/gamma2 evaluated from the empirical a(P) fit.
  static WidthModelParams reference(std::span<const double> powers_mw,
                                    const APModelParams& ap = {});
  void validate() const;
};

// Total ensemble width for an explicit a(P)/gamma2 value.
double total_width(const WidthModelParams& p, double a_over_g2, double power_mw,
                   double rabi_mhz, double gamma2 = 1.0);

// Total width using p.a_over_g2[power_index].
double total_width_model(const WidthModelParams& p, double power_mw, std::size_t power_index,
                         double rabi_mhz, double gamma2 = 1.0);

// --- hyperfine triplet -----------------------------------------------------

struct HyperfineModel {
  double amplitude = 5e-3;
  double center_mhz = 2654.0;
  double hwhm_mhz = 2.0;
  double splitting_mhz = 2.2;
};

// 1 - sum_{mI=-1,0,1} A g^2 / ((nu - nu0 - mI A_hf)^2 + g^2)
double triple_lorentzian(const HyperfineModel& model, double nu_mhz) noexcept;
std::vector<double> triple_lorentzian(const HyperfineModel& model,
                                      std::span<const double> grid_mhz);

// Total on-resonance depth C = A (1 + 2 g^2 / (A_hf^2 + g^2)).
double hyperfine_contrast(const HyperfineModel& model) noexcept;

// --- contrast ---------------------------------------------------------------

// Parameters of the ensemble contrast model, in the combinations that the
// data can identify.
struct ContrastModelParams {
  double theta = 22.9e-3;
  double g1_over_c_mw = 0.71;   // gamma1 / c
  double g1g2_per_us2 = 0.0047;  // gamma1 * gamma2
};

// 1/4 theta cP/(cP + gamma1 (1 - theta)) * f^2 / (f^2 + gamma2 (gamma1 + cP) / (2 pi)^2)
double contrast_model(double theta, double g1_over_c_mw, double g1g2_per_us2, double power_mw,
                      double rabi_mhz);
inline double contrast_model(const ContrastModelParams& p, double power_mw, double rabi_mhz) {
  return contrast_model(p.theta, p.g1_over_c_mw, p.g1g2_per_us2, power_mw, rabi_mhz);
}

}  // namespace odmr
