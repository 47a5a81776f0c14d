#pragma once

#include <optional>
#include <span>
#include <vector>

#include "odmr/least_squares.hpp"
#include "odmr/lineshape.hpp"
#include "odmr/spectrum.hpp"

namespace odmr {

// --- residual models (exposed so their Jacobians can be checked) -----------

// Triple-Lorentzian dip; parameters (A, nu0, g), splitting fixed.
class TripleLorentzianResidual final : public ResidualModel {
 public:
  TripleLorentzianResidual(std::vector<double> freq, std::vector<double> signal, double ahf)
      : freq_(std::move(freq)), signal_(std::move(signal)), ahf_(ahf) {}
  std::size_t size() const override { return freq_.size(); }
  void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r) const override;
  bool jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& j) const override;

 private:
  std::vector<double> freq_, signal_;
  double ahf_;
};

// Global width model; parameters (dnu_inh, ratio, c/g2, P0, f0, a_0 .. a_{m-1}).
class WidthModelResidual final : public ResidualModel {
 public:
  WidthModelResidual(const MeasurementGrid& grid, SpinFlipForm form);
  std::size_t size() const override { return power_.size(); }
  void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r) const override;
  bool jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& j) const override;
  std::size_t power_count() const { return powers_.size(); }
  const std::vector<double>& powers() const { return powers_; }

 private:
  std::vector<double> power_, rabi_, width_;
  std::vector<std::size_t> index_;
  std::vector<double> powers_;
  SpinFlipForm form_;
};

// Ensemble contrast model; parameters (theta, gamma1/c, gamma1 gamma2).
class ContrastModelResidual final : public ResidualModel {
 public:
  explicit ContrastModelResidual(const MeasurementGrid& grid);
  std::size_t size() const override { return power_.size(); }
  void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r) const override;
  bool jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& j) const override;

 private:
  std::vector<double> power_, rabi_, amplitude_;
};

// Empirical a(P) curve; parameters (a1, b1, c1).
class APCurveResidual final : public ResidualModel {
 public:
  APCurveResidual(std::vector<double> powers, std::vector<double> values)
      : powers_(std::move(powers)), values_(std::move(values)) {}
  std::size_t size() const override { return powers_.size(); }
  void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r) const override;
  bool jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& j) const override;

 private:
  std::vector<double> powers_, values_;
};

// --- per-spectrum fits ------------------------------------------------------

// Windows of `width_mhz` centred on nu0 +- delta_mhz are dropped before
// fitting. nu0 comes from `center_mhz` when given, else from the initial guess.
struct ExclusionConfig {
  bool enabled = true;
  double delta_mhz = 33.0;
  double width_mhz = 20.0;
  std::optional<double> center_mhz;
};

struct InitialGuess {
  double amplitude = 0.0;
  double center_mhz = 0.0;
  double hwhm_mhz = 0.0;
};

// Dip position from the smoothed minimum; g from the measured half-depth
// width by inverting the triplet shape; A from the depth.
// InsufficientData if the dip is not above 3x the median sigma.
InitialGuess initial_guess(const Spectrum& spec, double ahf_mhz = 2.2);

// Parameters reported as A, nu0, g.
FitReport fit_spectrum(const Spectrum& spec, double ahf_mhz = 2.2,
                       const ExclusionConfig& exclusion = {},
                       const LeastSquaresOptions& options = {});

// --- global fits ------------------------------------------------------------

struct WidthFitResult {
  FitReport report;  // dnu_inh_mhz, ratio_g1_g2, c_over_g2, p0_mw, f0_mhz, a_over_g2[i]
  WidthModelParams params;
  std::vector<double> powers;  // distinct powers, index-aligned with params.a_over_g2
};

// Needs >= 2 distinct powers and >= 3 distinct Rabi frequencies.
// Rank-deficient directions are reported, never thrown; a(P) entries whose
// ci68 exceeds their value get a warning.
WidthFitResult global_width_fit(const MeasurementGrid& grid, const LeastSquaresOptions& options = {},
                                SpinFlipForm form = SpinFlipForm::RabiSquared);

struct ContrastFitResult {
  FitReport report;  // theta, g1_over_c_mw, g1g2_per_us2
  ContrastModelParams params;
};

// Fits the per-component amplitudes of the grid. Degenerate designs (a single
// light power) come back with the degenerate parameters in `unidentifiable`.
ContrastFitResult global_contrast_fit(const MeasurementGrid& grid,
                                      const LeastSquaresOptions& options = {});

struct APFitResult {
  FitReport report;  // a1, b1, c1
  APModelParams params;
};

// Weighted fit of the empirical a(P) curve. Points with non-finite or
// non-positive ci are dropped. Fewer than 3 usable points is
// UnidentifiableParameter, exactly 3 is InsufficientData.
APFitResult fit_ap_curve(std::span<const double> powers_mw, std::span<const double> values,
                         std::span<const double> ci68, const LeastSquaresOptions& options = {});

// Generalized least squares with the full covariance of the a(P) estimates,
// which the global width fit correlates through the shared parameters.
// Entries with a non-finite variance are dropped.
APFitResult fit_ap_curve(std::span<const double> powers_mw, std::span<const double> values,
                         const Eigen::MatrixXd& covariance, const LeastSquaresOptions& options = {});

}  // namespace odmr
