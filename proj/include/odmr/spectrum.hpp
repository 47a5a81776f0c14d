#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace odmr {

struct SpectrumMeta {
  double power_mw = 0.0;
  double rabi_mhz = 0.0;
  std::string sample_id = "synthetic";
  double delta_side_mhz = 33.0;
};

// A normalized ODMR trace; the baseline far from resonance is ~1.
struct Spectrum {
  std::vector<double> freq_mhz;
  std::vector<double> signal;
  std::vector<double> sigma;
  SpectrumMeta meta;

  std::size_t size() const noexcept { return freq_mhz.size(); }
  // Equal-length columns, strictly increasing frequencies, finite values, sigma > 0.
  void validate() const;
};

struct GridRecord {
  double power_mw = 0.0;
  double rabi_mhz = 0.0;
  double width_mhz = 0.0;
  double width_sigma = 0.0;
  double amplitude = 0.0;
  double amplitude_sigma = 0.0;
};

// Per-setting widths and amplitudes from the individual spectrum fits.
struct MeasurementGrid {
  std::vector<GridRecord> records;

  // Sorted distinct light powers / Rabi frequencies.
  std::vector<double> distinct_powers() const;
  std::vector<double> distinct_rabis() const;
  std::size_t power_index(double power_mw) const;
  void validate() const;
};

}  // namespace odmr
