#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "odmr/lineshape.hpp"

namespace odmr {

// Detected fluorescence as a function of pump power, P_fl = k P / (1 + P / P_sat).
struct PhotonBudget {
  double k_conv = 6.21e-3;
  double p_sat_mw = 4.8e3;
  double wavelength_nm = 670.0;
  double gyromagnetic = 1.761e11;  // 1/(s T)

  void validate() const;
};

double fluorescence_power_mw(const PhotonBudget& b, double pump_mw);

// Detected photons per second.
double photon_rate(const PhotonBudget& b, double pump_mw);

struct Sensitivity {
  double value = 0.0;  // T/sqrt(Hz); +inf when the contrast vanishes
  std::string diagnostic;
  bool finite() const noexcept;
};

// (2 pi / gamma) dnu / (C sqrt(R)) with dnu converted to Hz.
Sensitivity shot_noise_sensitivity(const PhotonBudget& b, double fwhm_mhz, double contrast,
                                   double rate_per_s);

// How a per-component amplitude becomes a total contrast.
enum class ContrastConversion {
  ThreeA,  // C = 3A
  Exact,   // C = A (1 + 2 g^2 / (A_hf^2 + g^2)) with g = width / 2
};

struct SensitivityMapOptions {
  double rate_boost = 1.0;  // multiplies every photon rate
  ContrastConversion conversion = ContrastConversion::ThreeA;
  double splitting_mhz = 2.2;
  unsigned threads = 1;  // 0 picks the hardware concurrency
};

struct SensitivityMap {
  std::vector<double> powers_mw;
  std::vector<double> rabis_mhz;
  std::vector<double> values;  // row-major, one row per power
  std::size_t argmin_power = 0;
  std::size_t argmin_rabi = 0;

  double at(std::size_t ip, std::size_t ir) const { return values[ip * rabis_mhz.size() + ir]; }
  double min_value() const { return at(argmin_power, argmin_rabi); }
};

// S_B over a (P, f_R) grid from the surrogate width, a(P) and contrast
// models. The a(P) values in `width` are ignored; `ap` supplies them at each
// grid power. Cells are independent and the result does not depend on the
// thread count.
SensitivityMap sensitivity_map(const WidthModelParams& width, const APModelParams& ap,
                               const ContrastModelParams& contrast, const PhotonBudget& budget,
                               std::span<const double> powers_mw, std::span<const double> rabis_mhz,
                               const SensitivityMapOptions& options = {});

// Columns power_mw rabi_mhz sensitivity_t_per_rthz; non-finite cells as NA.
void write_sensitivity_columns(std::ostream& os, const SensitivityMap& map);
// Matrix with powers down the rows and Rabi frequencies across the columns.
void write_sensitivity_matrix(std::ostream& os, const SensitivityMap& map);

}  // namespace odmr
