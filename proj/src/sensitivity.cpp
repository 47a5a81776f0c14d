#include "odmr/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

#include "odmr/constants.hpp"
#include "odmr/data_io.hpp"
#include "odmr/error.hpp"

namespace odmr {

using namespace constants;

void PhotonBudget::validate() const {
  const std::pair<double, const char*> checks[] = {{k_conv, "k_conv"},
                                                   {p_sat_mw, "p_sat_mw"},
                                                   {wavelength_nm, "wavelength_nm"},
                                                   {gyromagnetic, "gyromagnetic"}};
  for (const auto& [v, name] : checks) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw InvalidParameter(std::string("PhotonBudget: ") + name + " must be > 0");
    }
  }
}

double fluorescence_power_mw(const PhotonBudget& b, double pump_mw) {
  b.validate();
  if (!(pump_mw >= 0.0)) throw InvalidParameter("fluorescence_power: pump must be >= 0");
  return b.k_conv * pump_mw / (1.0 + pump_mw / b.p_sat_mw);
}

double photon_rate(const PhotonBudget& b, double pump_mw) {
  const double watts = fluorescence_power_mw(b, pump_mw) * kMwToW;
  const double photon_energy = kPlanck * kSpeedOfLight / (b.wavelength_nm * kNmToM);
  return watts / photon_energy;
}

bool Sensitivity::finite() const noexcept { return std::isfinite(value); }

Sensitivity shot_noise_sensitivity(const PhotonBudget& b, double fwhm_mhz, double contrast,
                                   double rate) {
  if (!(fwhm_mhz > 0.0)) throw InvalidParameter("shot_noise_sensitivity: width must be > 0");
  if (!(contrast >= 0.0) || contrast > 1.0) {
    throw InvalidParameter("shot_noise_sensitivity: contrast must lie in [0, 1]");
  }
  if (!(rate >= 0.0)) throw InvalidParameter("shot_noise_sensitivity: rate must be >= 0");
  Sensitivity s;
  if (contrast == 0.0 || rate == 0.0) {
    s.value = std::numeric_limits<double>::infinity();
    s.diagnostic = contrast == 0.0 ? "zero contrast" : "zero photon rate";
    return s;
  }
  s.value = kTwoPi / b.gyromagnetic * (fwhm_mhz * kMhzToHz) / (contrast * std::sqrt(rate));
  return s;
}

SensitivityMap sensitivity_map(const WidthModelParams& width, const APModelParams& ap,
                               const ContrastModelParams& contrast, const PhotonBudget& budget,
                               std::span<const double> powers, std::span<const double> rabis,
                               const SensitivityMapOptions& opt) {
  budget.validate();
  WidthModelParams wp = width;
  wp.a_over_g2.clear();
  wp.validate();
  if (powers.empty() || rabis.empty()) throw InvalidParameter("sensitivity_map: empty grid");
  if (!(opt.rate_boost > 0.0)) throw InvalidParameter("sensitivity_map: rate boost must be > 0");
  for (double p : powers) {
    if (!(p > 0.0)) throw InvalidParameter("sensitivity_map: powers must be > 0");
  }
  for (double f : rabis) {
    if (!(f >= 0.0)) throw InvalidParameter("sensitivity_map: Rabi frequencies must be >= 0");
  }

  SensitivityMap map;
  map.powers_mw.assign(powers.begin(), powers.end());
  map.rabis_mhz.assign(rabis.begin(), rabis.end());
  map.values.assign(powers.size() * rabis.size(), 0.0);

  auto cell = [&](std::size_t k) {
    const std::size_t ip = k / rabis.size();
    const std::size_t ir = k % rabis.size();
    const double p = powers[ip];
    const double f = rabis[ir];
    const double dnu = total_width(wp, a_of_p(ap, p), p, f);
    const double amp = contrast_model(contrast, p, f);
    double c = 3.0 * amp;
    if (opt.conversion == ContrastConversion::Exact) {
      const double g2 = 0.25 * dnu * dnu;
      c = amp * (1.0 + 2.0 * g2 / (opt.splitting_mhz * opt.splitting_mhz + g2));
    }
    const double rate = opt.rate_boost * photon_rate(budget, p);
    map.values[k] = shot_noise_sensitivity(budget, dnu, std::min(c, 1.0), rate).value;
  };

  unsigned threads = opt.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : opt.threads;
  const std::size_t n = map.values.size();
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t k = 0; k < n; ++k) cell(k);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t k = t; k < n; k += threads) cell(k);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    if (map.values[k] < best) {
      best = map.values[k];
      map.argmin_power = k / rabis.size();
      map.argmin_rabi = k % rabis.size();
    }
  }
  return map;
}

namespace {

std::string cell_text(double v) { return std::isfinite(v) ? format_number(v) : "NA"; }

}  // namespace

void write_sensitivity_columns(std::ostream& os, const SensitivityMap& map) {
  os << "# odmr-sensitivity-map v1\n";
  os << "power_mw rabi_mhz sensitivity_t_per_rthz\n";
  for (std::size_t ip = 0; ip < map.powers_mw.size(); ++ip) {
    for (std::size_t ir = 0; ir < map.rabis_mhz.size(); ++ir) {
      os << format_number(map.powers_mw[ip]) << ' ' << format_number(map.rabis_mhz[ir]) << ' '
         << cell_text(map.at(ip, ir)) << '\n';
    }
  }
}

void write_sensitivity_matrix(std::ostream& os, const SensitivityMap& map) {
  os << "# odmr-sensitivity-matrix v1\n";
  os << "# rows: power_mw (first column); columns: rabi_mhz (first row); unit T/sqrt(Hz)\n";
  os << "power_mw\\rabi_mhz";
  for (double f : map.rabis_mhz) os << ' ' << format_number(f);
  os << '\n';
  for (std::size_t ip = 0; ip < map.powers_mw.size(); ++ip) {
    os << format_number(map.powers_mw[ip]);
    for (std::size_t ir = 0; ir < map.rabis_mhz.size(); ++ir) os << ' ' << cell_text(map.at(ip, ir));
    os << '\n';
  }
}

}  // namespace odmr
