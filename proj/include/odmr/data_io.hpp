#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odmr/least_squares.hpp"
#include "odmr/lineshape.hpp"
#include "odmr/spectrum.hpp"

namespace odmr {

// --- synthetic data ---------------------------------------------------------

// Satellite dips at nu0 +- delta from simultaneous NV-P1 spin flips.
struct SideResonance {
  double delta_mhz = 33.0;
  double depth = 1e-3;
  double hwhm_mhz = 2.0;
};

// Triple-Lorentzian spectrum, optional side dips, i.i.d. Gaussian noise of
// standard deviation `noise_rel`. Sigma column is noise_rel (or
// kNoiseFloor when noise_rel is 0). Same seed, same bytes.
inline constexpr double kNoiseFloor = 1e-6;
Spectrum synth_spectrum(const HyperfineModel& truth, std::span<const double> grid_mhz,
                        const std::optional<SideResonance>& side, double noise_rel,
                        std::uint64_t seed);

struct GridNoise {
  double width_rel = 0.02;
  double amplitude_rel = 0.03;
};

// Widths from the global width model and amplitudes from the contrast model
// at every (power, rabi) pair, perturbed by relative Gaussian noise.
// width_params.a_over_g2 must have one entry per power.
MeasurementGrid synth_grid(const WidthModelParams& width_params,
                           const ContrastModelParams& contrast_params,
                           std::span<const double> powers_mw, std::span<const double> rabis_mhz,
                           const GridNoise& noise, std::uint64_t seed);

// --- Rabi calibration -------------------------------------------------------

struct RabiRecord {
  double mw_power = 0.0;  // generator setting, arbitrary linear units
  double rabi_mhz = 0.0;
};

struct RabiCalibration {
  double k_rabi = 0.0;  // MHz per sqrt(power unit)
  std::vector<RabiRecord> records;
  std::vector<double> residuals_mhz;  // measured - k sqrt(P)
  double residual_rms_mhz = 0.0;
  // Correlation of the residuals with P; near zero for a clean square-root law.
  double residual_trend = 0.0;

  double rabi_at(double mw_power) const;
};

// Least squares f_R = k sqrt(P_MW).
RabiCalibration fit_rabi_calibration(std::span<const RabiRecord> records);

// --- text formats -------------------------------------------------------------

void write_spectrum(std::ostream& os, const Spectrum& s);
Spectrum read_spectrum(std::istream& is);
void write_spectrum(const std::filesystem::path& path, const Spectrum& s);
Spectrum read_spectrum(const std::filesystem::path& path);

void write_grid(std::ostream& os, const MeasurementGrid& g);
MeasurementGrid read_grid(std::istream& is);
void write_grid(const std::filesystem::path& path, const MeasurementGrid& g);
MeasurementGrid read_grid(const std::filesystem::path& path);

void write_fit_report(std::ostream& os, const FitReport& r, const std::string& title = "fit");
void write_fit_report(const std::filesystem::path& path, const FitReport& r,
                      const std::string& title = "fit");

// Shortest decimal string that parses back to exactly `v`.
std::string format_number(double v);

}  // namespace odmr
