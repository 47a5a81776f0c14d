#include "odmr/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "odmr/constants.hpp"
#include "odmr/data_io.hpp"
#include "odmr/error.hpp"

namespace odmr {

using constants::kTwoPi;

// --- residual models --------------------------------------------------------

void TripleLorentzianResidual::evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
  const HyperfineModel m{x[0], x[1], x[2], ahf_};
  for (std::size_t i = 0; i < freq_.size(); ++i) {
    r[static_cast<Eigen::Index>(i)] = triple_lorentzian(m, freq_[i]) - signal_[i];
  }
}

bool TripleLorentzianResidual::jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& j) const {
  const double a = x[0], nu0 = x[1], g = x[2];
  const double g2 = g * g;
  for (std::size_t i = 0; i < freq_.size(); ++i) {
    double da = 0.0, dnu = 0.0, dg = 0.0;
    for (int mi = -1; mi <= 1; ++mi) {
      const double d = freq_[i] - nu0 - mi * ahf_;
      const double den = d * d + g2;
      da -= g2 / den;
      dnu -= a * 2.0 * d * g2 / (den * den);
      dg -= a * 2.0 * g * d * d / (den * den);
    }
    const auto row = static_cast<Eigen::Index>(i);
    j(row, 0) = da;
    j(row, 1) = dnu;
    j(row, 2) = dg;
  }
  return true;
}

WidthModelResidual::WidthModelResidual(const MeasurementGrid& grid, SpinFlipForm form)
    : powers_(grid.distinct_powers()), form_(form) {
  for (const auto& r : grid.records) {
    power_.push_back(r.power_mw);
    rabi_.push_back(r.rabi_mhz);
    width_.push_back(r.width_mhz);
    index_.push_back(grid.power_index(r.power_mw));
  }
}

namespace {

WidthModelParams width_params_from(const Eigen::VectorXd& x, std::size_t m, SpinFlipForm form) {
  WidthModelParams p;
  p.dnu_inh_mhz = x[0];
  p.ratio_g1_g2 = x[1];
  p.c_over_g2 = x[2];
  p.p0_mw = x[3];
  p.f0_mhz = x[4];
  p.form = form;
  p.a_over_g2.assign(x.data() + 5, x.data() + 5 + m);
  return p;
}

}  // namespace

void WidthModelResidual::evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
  const WidthModelParams p = width_params_from(x, powers_.size(), form_);
  for (std::size_t i = 0; i < power_.size(); ++i) {
    r[static_cast<Eigen::Index>(i)] =
        total_width(p, p.a_over_g2[index_[i]], power_[i], rabi_[i]) - width_[i];
  }
}

bool WidthModelResidual::jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& j) const {
  const double ratio = x[1], c = x[2], p0 = x[3], f0 = x[4];
  j.setZero();
  for (std::size_t i = 0; i < power_.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const double pw = power_[i], f = rabi_[i];
    const double a = x[5 + static_cast<Eigen::Index>(index_[i])];
    const double drive = form_ == SpinFlipForm::RabiSquared ? f * f : f;
    const double sat_f = 1.0 + f * f / (f0 * f0);
    const double s = 1.0 + pw / p0;
    const double d = ratio + a * drive / sat_f + c * pw;
    const double q = std::sqrt(4.0 * s / d);
    const double dw_dd = -f * q / (2.0 * d);  // d width / d denominator
    j(row, 0) = 1.0;
    j(row, 1) = dw_dd;
    j(row, 2) = dw_dd * pw;
    j(row, 3) = f * q / (2.0 * s) * (-pw / (p0 * p0));
    j(row, 4) = dw_dd * a * drive * (2.0 * f * f / (f0 * f0 * f0)) / (sat_f * sat_f);
    j(row, 5 + static_cast<Eigen::Index>(index_[i])) = dw_dd * drive / sat_f;
  }
  return true;
}

ContrastModelResidual::ContrastModelResidual(const MeasurementGrid& grid) {
  for (const auto& r : grid.records) {
    power_.push_back(r.power_mw);
    rabi_.push_back(r.rabi_mhz);
    amplitude_.push_back(r.amplitude);
  }
}

void ContrastModelResidual::evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
  for (std::size_t i = 0; i < power_.size(); ++i) {
    r[static_cast<Eigen::Index>(i)] =
        contrast_model(x[0], x[1], x[2], power_[i], rabi_[i]) - amplitude_[i];
  }
}

bool ContrastModelResidual::jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& j) const {
  const double theta = x[0], k = x[1], q = x[2];
  const double four_pi2 = kTwoPi * kTwoPi;
  j.setZero();
  for (std::size_t i = 0; i < power_.size(); ++i) {
    const double pw = power_[i], f = rabi_[i];
    if (pw <= 0.0 || f <= 0.0) continue;
    const auto row = static_cast<Eigen::Index>(i);
    const double den_p = pw + k * (1.0 - theta);
    const double pol = pw / den_p;
    const double f2 = f * f;
    const double e = q * (1.0 + pw / k) / four_pi2;
    const double sat = f2 / (f2 + e);
    const double dsat_de = -f2 / ((f2 + e) * (f2 + e));
    j(row, 0) = 0.25 * pol * sat + 0.25 * theta * sat * pw * k / (den_p * den_p);
    j(row, 1) = 0.25 * theta *
                (sat * (-pw * (1.0 - theta) / (den_p * den_p)) +
                 pol * dsat_de * (-q * pw / (k * k * four_pi2)));
    j(row, 2) = 0.25 * theta * pol * dsat_de * (1.0 + pw / k) / four_pi2;
  }
  return true;
}

void APCurveResidual::evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
  const APModelParams p{x[0], x[1], x[2]};
  for (std::size_t i = 0; i < powers_.size(); ++i) {
    r[static_cast<Eigen::Index>(i)] = a_of_p(p, powers_[i]) - values_[i];
  }
}

bool APCurveResidual::jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& j) const {
  const double a1 = x[0], b1 = x[1];
  for (std::size_t i = 0; i < powers_.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const double pw = powers_[i];
    const double den = 1.0 + pw / b1;
    j(row, 0) = pw / den;
    j(row, 1) = a1 * pw * (pw / (b1 * b1)) / (den * den);
    j(row, 2) = 1.0;
  }
  return true;
}

// --- helpers ----------------------------------------------------------------

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

// Best of several starting points. Converged fits beat unconverged ones,
// then lower chi-square wins.
FitReport multistart(const ResidualModel& model, const std::vector<std::vector<ParameterSpec>>& starts,
                     const Eigen::VectorXd& sigmas, LeastSquaresOptions opt) {
  const bool want_throw = opt.throw_on_no_convergence;
  opt.throw_on_no_convergence = false;
  std::optional<FitReport> best;
  std::string last_error;
  for (const auto& start : starts) {
    try {
      FitReport r = least_squares(model, start, sigmas, opt);
      const bool better = !best || (r.converged && !best->converged) ||
                          (r.converged == best->converged && r.chi_square < best->chi_square);
      if (better) best = std::move(r);
    } catch (const SingularJacobian&) {
      throw;
    } catch (const InvalidParameter& e) {
      last_error = e.what();
    }
  }
  if (!best) throw NoConvergence("no starting point produced a finite fit: " + last_error);
  if (!best->converged && want_throw) {
    std::ostringstream os;
    os << "no convergence from " << starts.size() << " starting points (scaled gradient "
       << best->gradient_norm << ")";
    throw NoConvergence(os.str());
  }
  return *best;
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Half width at half depth of the unit-amplitude triplet, first crossing
// walking outward from the centre.
double triplet_half_width(double g, double ahf) {
  const HyperfineModel m{1.0, 0.0, g, ahf};
  const double half = 0.5 * (1.0 - triple_lorentzian(m, 0.0));
  auto depth = [&](double x) { return 1.0 - triple_lorentzian(m, x); };
  const double step = g / 20.0;
  double lo = 0.0, hi = step;
  while (depth(hi) > half) {
    lo = hi;
    hi += step;
  }
  for (int i = 0; i < 100 && hi - lo > 1e-12 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (depth(mid) > half ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

InitialGuess guess_from(std::span<const double> freq, std::span<const double> signal,
                        std::span<const double> sigma, double ahf) {
  const std::size_t n = freq.size();
  if (n < 5) throw InsufficientData("initial_guess: fewer than 5 points");
  const std::size_t k = std::max<std::size_t>(2, n / 500);
  std::vector<double> smooth(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= k ? i - k : 0;
    const std::size_t hi = std::min(n - 1, i + k);
    double s = 0.0;
    for (std::size_t q = lo; q <= hi; ++q) s += signal[q];
    smooth[i] = s / static_cast<double>(hi - lo + 1);
  }
  const auto imin = static_cast<std::size_t>(
      std::min_element(smooth.begin(), smooth.end()) - smooth.begin());
  const double depth = 1.0 - smooth[imin];
  const double noise = median(std::vector<double>(sigma.begin(), sigma.end()));
  if (!(depth > 3.0 * noise)) {
    std::ostringstream os;
    os << "initial_guess: dip depth " << depth << " is not above 3x the median sigma " << noise;
    throw InsufficientData(os.str());
  }
  const double half = 1.0 - 0.5 * depth;
  auto crossing = [&](int dir) {
    std::size_t i = imin;
    while (true) {
      const bool at_edge = dir < 0 ? i == 0 : i + 1 >= n;
      if (at_edge) return freq[i];
      const std::size_t next = dir < 0 ? i - 1 : i + 1;
      if (smooth[next] >= half) {
        const double t = (half - smooth[i]) / (smooth[next] - smooth[i]);
        return freq[i] + t * (freq[next] - freq[i]);
      }
      i = next;
    }
  };
  const double hw = 0.5 * (crossing(+1) - crossing(-1));
  if (!(hw > 0.0)) throw InsufficientData("initial_guess: dip is narrower than the grid spacing");

  double glo = 1e-4 * hw, ghi = 2.0 * hw;
  for (int i = 0; i < 80; ++i) {
    const double mid = std::sqrt(glo * ghi);
    (triplet_half_width(mid, ahf) < hw ? glo : ghi) = mid;
  }
  InitialGuess g;
  g.center_mhz = freq[imin];
  g.hwhm_mhz = std::sqrt(glo * ghi);
  const double gg = g.hwhm_mhz * g.hwhm_mhz;
  g.amplitude = depth / (1.0 + 2.0 * gg / (ahf * ahf + gg));
  return g;
}

}  // namespace

// --- per-spectrum fits ------------------------------------------------------

InitialGuess initial_guess(const Spectrum& spec, double ahf) {
  spec.validate();
  return guess_from(spec.freq_mhz, spec.signal, spec.sigma, ahf);
}

FitReport fit_spectrum(const Spectrum& spec, double ahf, const ExclusionConfig& ex,
                       const LeastSquaresOptions& opt) {
  spec.validate();
  if (!(ahf >= 0.0)) throw InvalidParameter("fit_spectrum: A_hf must be >= 0");

  std::vector<std::pair<double, double>> windows;
  auto make_windows = [&](double center) {
    windows.clear();
    if (!ex.enabled) return;
    if (!(ex.width_mhz > 0.0) || !(ex.delta_mhz > 0.0)) {
      throw InvalidParameter("fit_spectrum: exclusion delta and width must be > 0");
    }
    for (double sgn : {-1.0, 1.0}) {
      const double c = center + sgn * ex.delta_mhz;
      windows.emplace_back(c - 0.5 * ex.width_mhz, c + 0.5 * ex.width_mhz);
    }
  };
  auto excluded = [&](double nu) {
    return std::any_of(windows.begin(), windows.end(),
                       [&](const auto& w) { return nu >= w.first && nu <= w.second; });
  };

  InitialGuess guess;
  if (ex.center_mhz) {
    make_windows(*ex.center_mhz);
  } else {
    guess = initial_guess(spec, ahf);
    make_windows(guess.center_mhz);
  }

  std::vector<double> f, s, u;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (excluded(spec.freq_mhz[i])) continue;
    f.push_back(spec.freq_mhz[i]);
    s.push_back(spec.signal[i]);
    u.push_back(spec.sigma[i]);
  }
  if (f.size() < 50) {
    throw InsufficientData("fit_spectrum: " + std::to_string(f.size()) +
                           " points left after exclusion, need 50");
  }
  guess = guess_from(f, s, u, ahf);

  const TripleLorentzianResidual model(f, s, ahf);
  const std::vector<ParameterSpec> params{{"A", guess.amplitude, ParamTransform::Log},
                                          {"nu0", guess.center_mhz, ParamTransform::Identity},
                                          {"g", guess.hwhm_mhz, ParamTransform::Log}};
  FitReport report = least_squares(model, params, to_eigen(u), opt);
  report.excluded_ranges = windows;
  return report;
}

// --- global fits ------------------------------------------------------------

WidthFitResult global_width_fit(const MeasurementGrid& grid, const LeastSquaresOptions& options,
                                SpinFlipForm form) {
  grid.validate();
  const auto powers = grid.distinct_powers();
  const auto rabis = grid.distinct_rabis();
  if (powers.size() < 2 || rabis.size() < 3) {
    throw InsufficientData("global_width_fit: need >= 2 distinct powers and >= 3 Rabi settings, got " +
                           std::to_string(powers.size()) + " and " + std::to_string(rabis.size()));
  }
  const WidthModelResidual model(grid, form);
  std::vector<double> sig;
  for (const auto& r : grid.records) sig.push_back(r.width_sigma);

  // Inhomogeneous width from the zero-drive intercept of each power's two
  // lowest Rabi settings.
  std::vector<double> intercepts;
  double min_width = std::numeric_limits<double>::infinity();
  for (double pw : powers) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : grid.records) {
      if (r.power_mw == pw) pts.emplace_back(r.rabi_mhz, r.width_mhz);
      min_width = std::min(min_width, r.width_mhz);
    }
    std::sort(pts.begin(), pts.end());
    if (pts.size() >= 2 && pts[1].first > pts[0].first) {
      const double slope = (pts[1].second - pts[0].second) / (pts[1].first - pts[0].first);
      intercepts.push_back(pts[0].second - slope * pts[0].first);
    }
  }
  double dnu0 = median(intercepts);
  if (!(dnu0 > 0.0) || dnu0 > min_width) dnu0 = 0.5 * min_width;
  if (!(dnu0 > 0.0)) throw InsufficientData("global_width_fit: widths must be positive");

  double log_sum = 0.0;
  for (double pw : powers) log_sum += std::log(std::max(pw, 1e-12));
  const double p_mid = std::exp(log_sum / static_cast<double>(powers.size()));

  std::vector<std::vector<ParameterSpec>> starts;
  // the saturation power sets where narrowing stops, and a start on the
  // wrong side of it can settle in a local minimum
  for (double p0 : {0.1 * p_mid, p_mid, 10.0 * p_mid}) {
    for (double ratio : {1e-3, 1e-2}) {
      for (double f0 : {median(rabis), rabis.back()}) {
        std::vector<ParameterSpec> s{{"dnu_inh_mhz", dnu0},
                                     {"ratio_g1_g2", ratio},
                                     {"c_over_g2", 0.01},
                                     {"p0_mw", p0},
                                     {"f0_mhz", f0}};
        for (std::size_t i = 0; i < powers.size(); ++i) {
          s.push_back({"a_over_g2[" + std::to_string(i) + "]", 0.1});
        }
        starts.push_back(std::move(s));
      }
    }
  }
  LeastSquaresOptions opt = options;
  opt.fail_on_singular = false;
  WidthFitResult out;
  out.report = multistart(model, starts, to_eigen(sig), opt);
  out.powers = powers;
  out.params = width_params_from(to_eigen(out.report.values), powers.size(), form);
  for (std::size_t i = 0; i < powers.size(); ++i) {
    const std::size_t k = 5 + i;
    const double v = out.report.values[k];
    const double ci = out.report.ci68[k];
    if (std::isfinite(ci) && ci > v) {
      std::ostringstream os;
      os << out.report.names[k] << " weakly identified at P = " << format_number(powers[i])
         << " mW: ci68 " << format_number(ci) << " exceeds value " << format_number(v);
      out.report.warnings.push_back(os.str());
    }
  }
  return out;
}

ContrastFitResult global_contrast_fit(const MeasurementGrid& grid,
                                      const LeastSquaresOptions& options) {
  grid.validate();
  if (grid.records.empty()) throw InsufficientData("global_contrast_fit: empty grid");
  const auto powers = grid.distinct_powers();
  const ContrastModelResidual model(grid);
  std::vector<double> sig;
  double max_amp = 0.0;
  for (const auto& r : grid.records) {
    sig.push_back(r.amplitude_sigma);
    max_amp = std::max(max_amp, r.amplitude);
  }
  if (!(max_amp > 0.0)) throw InsufficientData("global_contrast_fit: no positive amplitude");
  const double theta0 = std::min(0.9, 8.0 * max_amp);
  const double p_lo = std::max(powers.front(), 1e-6);
  const double p_mid = std::sqrt(p_lo * std::max(powers.back(), p_lo));

  std::vector<std::vector<ParameterSpec>> starts;
  for (double k : {10.0 * p_lo, p_mid}) {
    for (double q : {1e-3, 1e-1}) {
      starts.push_back({{"theta", theta0}, {"g1_over_c_mw", k}, {"g1g2_per_us2", q}});
    }
  }
  LeastSquaresOptions opt = options;
  opt.fail_on_singular = false;
  ContrastFitResult out;
  out.report = multistart(model, starts, to_eigen(sig), opt);
  out.params = {out.report.values[0], out.report.values[1], out.report.values[2]};
  return out;
}

namespace {

// r -> L^{-1} r for a covariance L L^T, so that unit sigmas apply.
class WhitenedResidual final : public ResidualModel {
 public:
  WhitenedResidual(const ResidualModel& base, Eigen::MatrixXd lower)
      : base_(base), lower_(std::move(lower)) {}
  std::size_t size() const override { return base_.size(); }
  void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r) const override {
    Eigen::VectorXd raw(static_cast<Eigen::Index>(base_.size()));
    base_.evaluate(x, raw);
    r = lower_.triangularView<Eigen::Lower>().solve(raw);
  }
  bool jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& j) const override {
    Eigen::MatrixXd raw(static_cast<Eigen::Index>(base_.size()), x.size());
    if (!base_.jacobian(x, raw)) raw = finite_difference_jacobian(base_, x);
    j = lower_.triangularView<Eigen::Lower>().solve(raw);
    return true;
  }

 private:
  const ResidualModel& base_;
  Eigen::MatrixXd lower_;
};

APFitResult fit_ap_points(const std::vector<double>& p, const std::vector<double>& v,
                          const std::vector<double>& s, const Eigen::MatrixXd* cov,
                          const LeastSquaresOptions& options) {
  const std::vector<std::string> names{"a1", "b1", "c1"};
  if (p.size() < 3) {
    throw UnidentifiableParameter(
        "fit_ap_curve: " + std::to_string(p.size()) + " usable points for 3 parameters", names);
  }
  if (p.size() < 4) throw InsufficientData("fit_ap_curve: need at least 4 usable powers");

  const auto lo = static_cast<std::size_t>(std::min_element(p.begin(), p.end()) - p.begin());
  const double c1 = std::max(0.9 * v[lo], 1e-6);
  const double plateau = *std::max_element(v.begin(), v.end());
  const double rise = std::max(plateau - c1, 1e-3 * std::max(plateau, 1e-6));
  std::vector<std::vector<ParameterSpec>> starts;
  for (double b1 : {median(p), 3.0 * std::max(p[lo], 1e-6)}) {
    starts.push_back({{"a1", rise / b1}, {"b1", b1}, {"c1", c1}});
  }
  const APCurveResidual model(p, v);
  APFitResult out;
  if (cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(*cov);
    if (llt.info() != Eigen::Success) {
      throw InvalidParameter("fit_ap_curve: covariance is not positive definite");
    }
    const WhitenedResidual white(model, llt.matrixL());
    out.report = multistart(white, starts, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(p.size())),
                            options);
  } else {
    out.report = multistart(model, starts, to_eigen(s), options);
  }
  out.params = {out.report.values[0], out.report.values[1], out.report.values[2]};
  return out;
}

}  // namespace

APFitResult fit_ap_curve(std::span<const double> powers, std::span<const double> values,
                         std::span<const double> ci68, const LeastSquaresOptions& options) {
  if (powers.size() != values.size() || powers.size() != ci68.size()) {
    throw InvalidParameter("fit_ap_curve: powers, values and ci68 must have equal length");
  }
  std::vector<double> p, v, s;
  for (std::size_t i = 0; i < powers.size(); ++i) {
    if (std::isfinite(ci68[i]) && ci68[i] > 0.0 && std::isfinite(values[i])) {
      p.push_back(powers[i]);
      v.push_back(values[i]);
      s.push_back(ci68[i]);
    }
  }
  return fit_ap_points(p, v, s, nullptr, options);
}

APFitResult fit_ap_curve(std::span<const double> powers, std::span<const double> values,
                         const Eigen::MatrixXd& covariance, const LeastSquaresOptions& options) {
  const auto n = static_cast<Eigen::Index>(powers.size());
  if (values.size() != powers.size() || covariance.rows() != n || covariance.cols() != n) {
    throw InvalidParameter("fit_ap_curve: covariance must be n x n for n powers");
  }
  std::vector<Eigen::Index> keep;
  std::vector<double> p, v, s;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double var = covariance(i, i);
    const auto ui = static_cast<std::size_t>(i);
    if (var < 0.0) {
      throw InvalidParameter("fit_ap_curve: negative variance at P = " + format_number(powers[ui]) +
                             " mW");
    }
    if (std::isfinite(var) && var > 0.0 && std::isfinite(values[ui])) {
      keep.push_back(i);
      p.push_back(powers[ui]);
      v.push_back(values[ui]);
      s.push_back(std::sqrt(var));
    }
  }
  const auto m = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd sub(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = covariance(keep[a], keep[b]);
  }
  return fit_ap_points(p, v, s, &sub, options);
}

}  // namespace odmr
