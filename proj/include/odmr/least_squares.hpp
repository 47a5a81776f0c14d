#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace odmr {

// How a parameter is represented inside the solver. Log keeps it strictly
// positive; values and uncertainties are always reported in natural units.
enum class ParamTransform { Identity, Log };

struct ParameterSpec {
  std::string name;
  double initial = 1.0;
  ParamTransform transform = ParamTransform::Log;
};

// Residuals r_i(x) = model_i(x) - data_i, unweighted. The solver divides by
// the per-point sigmas it is given.
class ResidualModel {
 public:
  virtual ~ResidualModel() = default;
  virtual std::size_t size() const = 0;
  virtual void evaluate(const Eigen::VectorXd& params, Eigen::VectorXd& residuals) const = 0;
  // d r_i / d x_j in natural units. Return false to fall back on finite differences.
  virtual bool jacobian(const Eigen::VectorXd& /*params*/, Eigen::MatrixXd& /*jac*/) const {
    return false;
  }
};

// Adapter for ad-hoc models written as lambdas.
class FunctionModel final : public ResidualModel {
 public:
  using Eval = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;
  using Jac = std::function<void(const Eigen::VectorXd&, Eigen::MatrixXd&)>;

  FunctionModel(std::size_t n, Eval eval, Jac jac = {})
      : n_(n), eval_(std::move(eval)), jac_(std::move(jac)) {}

  std::size_t size() const override { return n_; }
  void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r) const override { eval_(x, r); }
  bool jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& j) const override {
    if (!jac_) return false;
    jac_(x, j);
    return true;
  }

 private:
  std::size_t n_;
  Eval eval_;
  Jac jac_;
};

// Central-difference Jacobian in natural units.
Eigen::MatrixXd finite_difference_jacobian(const ResidualModel& model, const Eigen::VectorXd& x,
                                           double rel_step = 1e-6);

enum class CovarianceScaling {
  ReducedChiSquare,  // scale by chi^2 / (n - p); insensitive to an overall sigma scale
  AbsoluteSigma,     // trust the sigmas as given
};

struct LeastSquaresOptions {
  int max_iterations = 200;
  double xtol = 1e-10;   // relative parameter step
  double ftol = 1e-12;   // relative cost decrease
  double gtol = 1e-6;    // scaled gradient that counts as converged without a tolerance stop
  double rank_tol = 1e-10;
  CovarianceScaling scaling = CovarianceScaling::ReducedChiSquare;
  bool analytic_jacobian = true;
  bool fail_on_singular = true;   // throw SingularJacobian instead of reporting
  bool throw_on_no_convergence = true;
};

struct FitReport {
  std::vector<std::string> names;
  std::vector<double> values;
  std::vector<double> ci68;  // one-sigma half widths; +inf when unidentifiable
  Eigen::MatrixXd covariance;
  double chi_square = 0.0;
  double residual_rms = 0.0;  // sqrt(chi^2 / n)
  std::size_t n_points = 0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  std::vector<std::pair<double, double>> excluded_ranges;
  std::vector<std::string> unidentifiable;
  std::vector<std::string> warnings;

  std::size_t index(std::string_view name) const;
  double value(std::string_view name) const { return values[index(name)]; }
  double ci(std::string_view name) const { return ci68[index(name)]; }
  bool has(std::string_view name) const;
};

// Levenberg-Marquardt minimization of sum_i (r_i / sigma_i)^2.
FitReport least_squares(const ResidualModel& model, const std::vector<ParameterSpec>& params,
                        const Eigen::VectorXd& sigmas, const LeastSquaresOptions& options = {});

// Throws UnidentifiableParameter when the report lists any.
void throw_if_unidentifiable(const FitReport& report);

}  // namespace odmr
