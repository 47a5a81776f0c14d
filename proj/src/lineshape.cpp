#include "odmr/lineshape.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "odmr/constants.hpp"
#include "odmr/error.hpp"
#include "odmr/numeric.hpp"

namespace odmr {

using constants::kPi;
using constants::kTwoPi;

namespace {

constexpr double kQuadratureTol = 1e-13;
constexpr double kWindowFwhm = 50.0;

// Peak-normalized Lorentzian with half width `hw`.
double unit_lorentzian(double x, double hw) { return hw * hw / (x * x + hw * hw); }

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || std::isnan(v)) throw InvalidParameter(std::string(name) + " must be > 0");
}

// Overlap integral of P(nu0) with the unit Lorentzian centred on nu0.
double overlap(const InhomogeneousDist& dist, double hw, double nu) {
  if (dist.kind == DistributionKind::Lorentzian) {
    // nu0 = c + w tan(t) maps P(nu0) d nu0 onto dt / pi over (-pi/2, pi/2)
    const double w = 0.5 * dist.fwhm_mhz;
    const double c = dist.center_mhz;
    std::vector<double> breaks;
    for (double k : {0.0, 1.0, 5.0, 25.0, 125.0}) {
      breaks.push_back(std::atan((nu - c + k * hw) / w));
      breaks.push_back(std::atan((nu - c - k * hw) / w));
    }
    auto integrand = [&](double t) { return unit_lorentzian(nu - c - w * std::tan(t), hw) / kPi; };
    return numeric::adaptive_simpson(integrand, -0.5 * kPi, 0.5 * kPi, kQuadratureTol, breaks);
  }

  const double s = dist.sigma_mhz();
  const double c = dist.center_mhz;
  const double half_window = kWindowFwhm * dist.fwhm_mhz;
  std::vector<double> breaks;
  for (double k : {0.0, 1.0, 3.0, 6.0, 10.0}) {
    breaks.push_back(c + k * s);
    breaks.push_back(c - k * s);
  }
  for (double k : {0.0, 1.0, 5.0, 25.0}) {
    breaks.push_back(nu + k * hw);
    breaks.push_back(nu - k * hw);
  }
  auto integrand = [&](double nu0) { return dist.density(nu0) * unit_lorentzian(nu - nu0, hw); };
  return numeric::adaptive_simpson(integrand, c - half_window, c + half_window, kQuadratureTol,
                                   breaks);
}

}  // namespace

double InhomogeneousDist::sigma_mhz() const noexcept {
  return fwhm_mhz / constants::kGaussianFwhmPerSigma;
}

double InhomogeneousDist::density(double nu0) const noexcept {
  const double x = nu0 - center_mhz;
  if (kind == DistributionKind::Lorentzian) {
    const double w = 0.5 * fwhm_mhz;
    return w / (kPi * (x * x + w * w));
  }
  const double s = sigma_mhz();
  return std::exp(-0.5 * x * x / (s * s)) / (s * std::sqrt(kTwoPi));
}

void InhomogeneousDist::validate() const {
  require_positive(fwhm_mhz, "fwhm_inh");
  if (!std::isfinite(center_mhz)) throw InvalidParameter("center must be finite");
}

double ensemble_signal(const InhomogeneousDist& dist, const LineshapeSummary& homogeneous,
                       double nu_mhz) {
  dist.validate();
  require_positive(homogeneous.fwhm_mhz, "homogeneous fwhm");
  const double ov = overlap(dist, 0.5 * homogeneous.fwhm_mhz, nu_mhz);
  const double sign = homogeneous.peak ? 1.0 : -1.0;
  return homogeneous.baseline * (1.0 + sign * homogeneous.contrast * ov);
}

std::vector<double> convolve_inhomogeneous(const InhomogeneousDist& dist,
                                           const LineshapeSummary& homogeneous,
                                           std::span<const double> grid) {
  dist.validate();
  require_positive(homogeneous.fwhm_mhz, "homogeneous fwhm");
  if (grid.size() < 2) throw GridTooCoarse("grid needs at least two points");
  const double combined = dist.fwhm_mhz + homogeneous.fwhm_mhz;
  const double max_step = std::min(dist.fwhm_mhz, homogeneous.fwhm_mhz) / 20.0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double step = grid[i] - grid[i - 1];
    if (!(step > 0.0)) throw GridTooCoarse("grid must be strictly increasing");
    if (step > max_step * (1.0 + 1e-12)) {
      throw GridTooCoarse("grid spacing " + std::to_string(step) + " MHz exceeds min(FWHM)/20 = " +
                          std::to_string(max_step) + " MHz");
    }
  }
  if (grid.back() - grid.front() < 20.0 * combined * (1.0 - 1e-12)) {
    throw GridTooCoarse("grid spans less than 20 combined FWHM");
  }
  std::vector<double> out(grid.size());
  std::transform(grid.begin(), grid.end(), out.begin(),
                 [&](double nu) { return ensemble_signal(dist, homogeneous, nu); });
  return out;
}

double ensemble_fwhm(const InhomogeneousDist& dist, const LineshapeSummary& homogeneous) {
  auto f = [&](double nu) { return ensemble_signal(dist, homogeneous, nu); };
  return numeric::symmetric_fwhm(f, dist.center_mhz, homogeneous.baseline,
                                 dist.fwhm_mhz + homogeneous.fwhm_mhz, 1e-12);
}

double ensemble_width_with_dephasing(double dnu_inh_mhz, double gamma2, double gamma1,
                                     double pump_rate, double rabi_mhz) {
  return dnu_inh_mhz + std::sqrt(gamma2 * gamma2 / (kPi * kPi) +
                                 4.0 * gamma2 / (gamma1 + pump_rate) * rabi_mhz * rabi_mhz);
}

double approximate_total_width(double dnu_inh_mhz, double gamma2, double gamma1,
                               double pump_rate, double rabi_mhz) {
  return dnu_inh_mhz + rabi_mhz * std::sqrt(4.0 * gamma2 / (gamma1 + pump_rate));
}

double nv_p1_rate(double a_over_g2, double gamma2, double rabi_mhz, double f0_mhz,
                  SpinFlipForm form) {
  require_positive(f0_mhz, "f0");
  const double sat = 1.0 + rabi_mhz * rabi_mhz / (f0_mhz * f0_mhz);
  const double drive = form == SpinFlipForm::RabiSquared ? rabi_mhz * rabi_mhz : rabi_mhz;
  return gamma2 * a_over_g2 * drive / sat;
}

double a_of_p(const APModelParams& params, double power_mw) {
  if (power_mw < 0.0) throw InvalidParameter("a_of_p: power must be >= 0");
  return params.a1 * power_mw / (1.0 + power_mw / params.b1) + params.c1;
}

WidthModelParams WidthModelParams::reference(std::span<const double> powers_mw,
                                             const APModelParams& ap) {
  WidthModelParams p;
  p.a_over_g2.reserve(powers_mw.size());
  for (double pw : powers_mw) p.a_over_g2.push_back(a_of_p(ap, pw));
  return p;
}

void WidthModelParams::validate() const {
  require_positive(dnu_inh_mhz, "dnu_inh");
  require_positive(ratio_g1_g2, "gamma1/gamma2");
  require_positive(c_over_g2, "c/gamma2");
  require_positive(p0_mw, "P0");
  require_positive(f0_mhz, "f0");
  for (double a : a_over_g2) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw InvalidParameter("a(P)/gamma2 must be >= 0");
  }
}

double total_width(const WidthModelParams& p, double a_over_g2, double power_mw, double rabi_mhz,
                   double gamma2) {
  const double gamma1 = p.ratio_g1_g2 * gamma2;
  const double spin_flip = nv_p1_rate(a_over_g2, gamma2, rabi_mhz, p.f0_mhz, p.form);
  const double pump = p.c_over_g2 * gamma2 * power_mw;
  const double saturation = 1.0 + power_mw / p.p0_mw;
  return p.dnu_inh_mhz +
         rabi_mhz * std::sqrt(4.0 * gamma2 * saturation / (gamma1 + spin_flip + pump));
}

double total_width_model(const WidthModelParams& p, double power_mw, std::size_t power_index,
                         double rabi_mhz, double gamma2) {
  if (power_index >= p.a_over_g2.size()) {
    throw InvalidParameter("total_width_model: power_index " + std::to_string(power_index) +
                           " out of range");
  }
  return total_width(p, p.a_over_g2[power_index], power_mw, rabi_mhz, gamma2);
}

double triple_lorentzian(const HyperfineModel& m, double nu) noexcept {
  const double g2 = m.hwhm_mhz * m.hwhm_mhz;
  double dip = 0.0;
  for (int mi = -1; mi <= 1; ++mi) {
    const double x = nu - m.center_mhz - mi * m.splitting_mhz;
    dip += m.amplitude * g2 / (x * x + g2);
  }
  return 1.0 - dip;
}

std::vector<double> triple_lorentzian(const HyperfineModel& model, std::span<const double> grid) {
  std::vector<double> out(grid.size());
  std::transform(grid.begin(), grid.end(), out.begin(),
                 [&](double nu) { return triple_lorentzian(model, nu); });
  return out;
}

double hyperfine_contrast(const HyperfineModel& m) noexcept {
  const double g2 = m.hwhm_mhz * m.hwhm_mhz;
  return m.amplitude * (1.0 + 2.0 * g2 / (m.splitting_mhz * m.splitting_mhz + g2));
}

double contrast_model(double theta, double g1_over_c_mw, double g1g2_per_us2, double power_mw,
                      double rabi_mhz) {
  if (power_mw <= 0.0 || rabi_mhz <= 0.0) return 0.0;
  const double polarization = power_mw / (power_mw + g1_over_c_mw * (1.0 - theta));
  const double f2 = rabi_mhz * rabi_mhz;
  const double saturation =
      f2 / (f2 + g1g2_per_us2 * (1.0 + power_mw / g1_over_c_mw) / (kTwoPi * kTwoPi));
  return 0.25 * theta * polarization * saturation;
}

}  // namespace odmr
