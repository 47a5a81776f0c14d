#include "odmr/least_squares.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "odmr/error.hpp"

namespace odmr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Transforms {
  std::vector<ParamTransform> kinds;

  Eigen::VectorXd to_natural(const Eigen::VectorXd& z) const {
    Eigen::VectorXd x(z.size());
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      x[j] = kinds[j] == ParamTransform::Log ? std::exp(z[j]) : z[j];
    }
    return x;
  }
  // dx/dz
  Eigen::VectorXd slope(const Eigen::VectorXd& x) const {
    Eigen::VectorXd d(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) d[j] = kinds[j] == ParamTransform::Log ? x[j] : 1.0;
    return d;
  }
};

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

class Problem {
 public:
  Problem(const ResidualModel& model, const Eigen::VectorXd& sigmas, bool analytic)
      : model_(model), inv_sigma_(sigmas.cwiseInverse()), analytic_(analytic) {}

  Eigen::VectorXd weighted_residuals(const Eigen::VectorXd& x) const {
    Eigen::VectorXd r(model_.size());
    model_.evaluate(x, r);
    return r.cwiseProduct(inv_sigma_);
  }

  Eigen::MatrixXd weighted_jacobian(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd j(model_.size(), x.size());
    if (!(analytic_ && model_.jacobian(x, j))) j = finite_difference_jacobian(model_, x);
    return inv_sigma_.asDiagonal() * j;
  }

 private:
  const ResidualModel& model_;
  Eigen::VectorXd inv_sigma_;
  bool analytic_;
};

double scaled_gradient(const Eigen::MatrixXd& jz, const Eigen::VectorXd& r) {
  const double rn = r.norm();
  if (rn == 0.0) return 0.0;
  const double max_col = jz.colwise().norm().maxCoeff();
  if (max_col == 0.0) return 0.0;
  return (jz.transpose() * r).cwiseAbs().maxCoeff() / (rn * max_col);
}

}  // namespace

std::size_t FitReport::index(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw InvalidParameter("FitReport: no parameter named '" + std::string(name) + "'");
}

bool FitReport::has(std::string_view name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

Eigen::MatrixXd finite_difference_jacobian(const ResidualModel& model, const Eigen::VectorXd& x,
                                           double rel_step) {
  const auto n = static_cast<Eigen::Index>(model.size());
  Eigen::MatrixXd j(n, x.size());
  Eigen::VectorXd rp(n), rm(n);
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = rel_step * (std::abs(x[k]) + rel_step);
    Eigen::VectorXd xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    model.evaluate(xp, rp);
    model.evaluate(xm, rm);
    j.col(k) = (rp - rm) / (xp[k] - xm[k]);
  }
  return j;
}

FitReport least_squares(const ResidualModel& model, const std::vector<ParameterSpec>& params,
                        const Eigen::VectorXd& sigmas, const LeastSquaresOptions& opt) {
  const auto n = static_cast<Eigen::Index>(model.size());
  const auto p = static_cast<Eigen::Index>(params.size());
  if (sigmas.size() != n) throw InvalidParameter("least_squares: sigma count != residual count");
  if ((sigmas.array() <= 0.0).any() || !sigmas.allFinite()) {
    throw InvalidParameter("least_squares: sigmas must be finite and > 0");
  }

  FitReport report;
  for (const auto& s : params) report.names.push_back(s.name);
  report.n_points = static_cast<std::size_t>(n);
  if (n < p) {
    throw UnidentifiableParameter("least_squares: " + std::to_string(n) + " points for " +
                                      std::to_string(p) + " parameters",
                                  report.names);
  }

  Transforms tf;
  Eigen::VectorXd z(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto& s = params[static_cast<std::size_t>(j)];
    tf.kinds.push_back(s.transform);
    if (s.transform == ParamTransform::Log) {
      if (!(s.initial > 0.0)) {
        throw InvalidParameter("least_squares: initial value of '" + s.name + "' must be > 0");
      }
      z[j] = std::log(s.initial);
    } else {
      z[j] = s.initial;
    }
  }

  const Problem prob(model, sigmas, opt.analytic_jacobian);
  Eigen::VectorXd x = tf.to_natural(z);
  Eigen::VectorXd r = prob.weighted_residuals(x);
  if (!all_finite(r)) throw InvalidParameter("least_squares: residual map not finite at init");
  double cost = 0.5 * r.squaredNorm();

  auto internal_jacobian = [&](const Eigen::VectorXd& xn) {
    return Eigen::MatrixXd(prob.weighted_jacobian(xn) * tf.slope(xn).asDiagonal());
  };
  Eigen::MatrixXd jz = internal_jacobian(x);
  Eigen::MatrixXd a = jz.transpose() * jz;
  Eigen::VectorXd g = jz.transpose() * r;
  // relative to diag(J^T J); smaller starts let log parameters jump onto plateaus
  double lambda = 1.0;
  double nu = 2.0;

  bool stop = false;
  int iter = 0;
  for (; iter < opt.max_iterations && !stop; ++iter) {
    if (cost == 0.0) {
      stop = true;
      break;
    }
    const double diag_floor = 1e-12 * std::max(a.diagonal().maxCoeff(), 1e-300);
    Eigen::VectorXd damping = a.diagonal().cwiseMax(diag_floor);

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd m = a;
      m.diagonal() += lambda * damping;
      const Eigen::VectorXd step = m.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= nu;
        nu *= 2.0;
      } else {
        const Eigen::VectorXd z_new = z + step;
        const Eigen::VectorXd x_new = tf.to_natural(z_new);
        const Eigen::VectorXd r_new = prob.weighted_residuals(x_new);
        const double cost_new = all_finite(r_new) && x_new.allFinite()
                                    ? 0.5 * r_new.squaredNorm()
                                    : kInf;
        const double predicted = 0.5 * step.dot(lambda * damping.cwiseProduct(step) - g);
        const double rho = predicted > 0.0 ? (cost - cost_new) / predicted : -1.0;
        if (rho > 0.0 && cost_new < cost) {
          const double decrease = cost - cost_new;
          bool small_step = true;
          for (Eigen::Index j = 0; j < p; ++j) {
            if (std::abs(step[j]) > opt.xtol * (std::abs(z[j]) + 1.0)) small_step = false;
          }
          z = z_new;
          x = x_new;
          r = r_new;
          cost = cost_new;
          jz = internal_jacobian(x);
          a = jz.transpose() * jz;
          g = jz.transpose() * r;
          lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
          nu = 2.0;
          accepted = true;
          // a heavily damped step is short by construction, so step and
          // decrease tests only mean something close to Gauss-Newton
          const bool near_gauss_newton =
              lambda < 1e-2 || scaled_gradient(jz, r) <= opt.gtol;
          if (near_gauss_newton && (small_step || decrease <= opt.ftol * (cost + decrease))) {
            stop = true;
          }
        } else {
          lambda *= nu;
          nu *= 2.0;
        }
      }
      // The damped step can no longer reduce the cost: we sit at the
      // minimum to working precision.
      if (!accepted && lambda > 1e20) {
        stop = true;
        break;
      }
    }
  }

  report.iterations = iter;
  report.values.assign(x.data(), x.data() + x.size());
  report.chi_square = 2.0 * cost;
  report.residual_rms = std::sqrt(report.chi_square / static_cast<double>(n));
  report.gradient_norm = scaled_gradient(jz, r);
  // Stopping on a tolerance counts as converged even when the scaled gradient
  // is not small: at an exact fit the residuals are rounding noise and their
  // angle to the Jacobian carries no information. Only the iteration budget
  // running out leaves the fit unconverged.
  report.converged = stop || report.gradient_norm <= opt.gtol;
  if (!report.converged && opt.throw_on_no_convergence) {
    std::ostringstream os;
    os << "least_squares: no convergence after " << iter << " iterations (scaled gradient "
       << report.gradient_norm << ")";
    throw NoConvergence(os.str());
  }

  // Covariance in natural units from the Jacobian at the optimum.
  const Eigen::MatrixXd jx = prob.weighted_jacobian(x);
  Eigen::VectorXd col_norm = jx.colwise().norm().transpose();
  std::vector<bool> unident(static_cast<std::size_t>(p), false);
  Eigen::MatrixXd jn = jx;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(col_norm[j] > 1e-300) || !std::isfinite(col_norm[j])) {
      unident[static_cast<std::size_t>(j)] = true;
      col_norm[j] = 1.0;
      jn.col(j).setZero();
    } else {
      jn.col(j) /= col_norm[j];
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jn, Eigen::ComputeThinV);
  const Eigen::VectorXd sv = svd.singularValues();
  const Eigen::MatrixXd& v = svd.matrixV();
  const double smax = sv.size() > 0 ? sv[0] : 0.0;
  Eigen::VectorXd inv_s2 = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index k = 0; k < sv.size(); ++k) {
    if (smax > 0.0 && sv[k] > opt.rank_tol * smax) {
      inv_s2[k] = 1.0 / (sv[k] * sv[k]);
    } else {
      for (Eigen::Index j = 0; j < p; ++j) {
        if (std::abs(v(j, k)) > 0.1) unident[static_cast<std::size_t>(j)] = true;
      }
    }
  }
  const Eigen::MatrixXd cov_norm = v * inv_s2.asDiagonal() * v.transpose();
  const Eigen::VectorXd inv_norm = col_norm.cwiseInverse();
  double scale = 1.0;
  if (opt.scaling == CovarianceScaling::ReducedChiSquare) {
    scale = n > p ? report.chi_square / static_cast<double>(n - p) : kInf;
  }
  report.covariance = scale * (inv_norm.asDiagonal() * cov_norm * inv_norm.asDiagonal());
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    if (unident[uj]) {
      report.ci68.push_back(kInf);
      report.unidentifiable.push_back(report.names[uj]);
    } else {
      const double var = report.covariance(j, j);
      report.ci68.push_back(std::isfinite(var) ? std::sqrt(std::max(var, 0.0)) : kInf);
    }
  }
  if (!report.unidentifiable.empty() && opt.fail_on_singular) {
    std::string list;
    for (const auto& s : report.unidentifiable) list += (list.empty() ? "" : ", ") + s;
    throw SingularJacobian("least_squares: Jacobian is rank deficient in {" + list + "}",
                           report.unidentifiable);
  }
  return report;
}

void throw_if_unidentifiable(const FitReport& report) {
  if (report.unidentifiable.empty()) return;
  std::string list;
  for (const auto& s : report.unidentifiable) list += (list.empty() ? "" : ", ") + s;
  throw UnidentifiableParameter("unidentifiable parameters: " + list, report.unidentifiable);
}

}  // namespace odmr
