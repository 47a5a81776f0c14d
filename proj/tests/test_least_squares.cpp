#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "odmr/error.hpp"
#include "odmr/least_squares.hpp"

using namespace odmr;

namespace {

// y = a + b x, solved by the normal equations as the reference.
struct Line {
  std::vector<double> x, y;
};

FunctionModel line_model(const Line& d) {
  return FunctionModel(d.x.size(), [&d](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    for (std::size_t i = 0; i < d.x.size(); ++i) r[i] = p[0] + p[1] * d.x[i] - d.y[i];
  });
}

// y = A exp(-x / tau) with analytic Jacobian.
struct Decay {
  std::vector<double> x, y;
};

FunctionModel decay_model(const Decay& d) {
  return FunctionModel(
      d.x.size(),
      [&d](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        for (std::size_t i = 0; i < d.x.size(); ++i) r[i] = p[0] * std::exp(-d.x[i] / p[1]) - d.y[i];
      },
      [&d](const Eigen::VectorXd& p, Eigen::MatrixXd& j) {
        for (std::size_t i = 0; i < d.x.size(); ++i) {
          const double e = std::exp(-d.x[i] / p[1]);
          j(i, 0) = e;
          j(i, 1) = p[0] * e * d.x[i] / (p[1] * p[1]);
        }
      });
}

std::vector<ParameterSpec> decay_params() {
  return {{"A", 1.0, ParamTransform::Log}, {"tau", 1.0, ParamTransform::Log}};
}

Decay decay_data(std::mt19937_64& rng, double noise) {
  Decay d;
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 40; ++i) {
    const double x = 0.1 * i;
    d.x.push_back(x);
    d.y.push_back(2.0 * std::exp(-x / 0.7) + noise * n(rng));
  }
  return d;
}

}  // namespace

TEST_CASE("linear model is solved exactly") {
  Line d;
  for (int i = 0; i < 10; ++i) {
    d.x.push_back(i);
    d.y.push_back(1.5 - 0.25 * i);
  }
  const auto m = line_model(d);
  const std::vector<ParameterSpec> params{{"a", 0.0, ParamTransform::Identity},
                                          {"b", 0.0, ParamTransform::Identity}};
  const auto r = least_squares(m, params, Eigen::VectorXd::Ones(10));
  CHECK(r.converged);
  CHECK(r.value("a") == doctest::Approx(1.5).epsilon(1e-10));
  CHECK(r.value("b") == doctest::Approx(-0.25).epsilon(1e-10));
  CHECK(r.residual_rms < 1e-10);
  CHECK(r.n_points == 10);
  CHECK(r.has("a"));
  CHECK_FALSE(r.has("c"));
  CHECK_THROWS_AS(r.value("c"), InvalidParameter);
}

TEST_CASE("linear fit agrees with the normal equations under noise") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 0.1);
  Line d;
  for (int i = 0; i < 25; ++i) {
    d.x.push_back(0.3 * i);
    d.y.push_back(0.7 + 1.1 * 0.3 * i + n(rng));
  }
  Eigen::MatrixXd a(25, 2);
  Eigen::VectorXd y(25);
  for (int i = 0; i < 25; ++i) {
    a(i, 0) = 1.0;
    a(i, 1) = d.x[i];
    y(i) = d.y[i];
  }
  const Eigen::Vector2d ref = (a.transpose() * a).ldlt().solve(a.transpose() * y);
  const Eigen::VectorXd res = a * ref - y;
  const Eigen::Matrix2d cov =
      (a.transpose() * a).inverse() * (res.squaredNorm() / (25.0 - 2.0));

  const auto m = line_model(d);
  const auto r = least_squares(m,
                               {{"a", 0.0, ParamTransform::Identity},
                                {"b", 0.0, ParamTransform::Identity}},
                               Eigen::VectorXd::Constant(25, 0.1));
  CHECK(r.value("a") == doctest::Approx(ref[0]).epsilon(1e-9));
  CHECK(r.value("b") == doctest::Approx(ref[1]).epsilon(1e-9));
  CHECK(r.ci("a") == doctest::Approx(std::sqrt(cov(0, 0))).epsilon(1e-6));
  CHECK(r.ci("b") == doctest::Approx(std::sqrt(cov(1, 1))).epsilon(1e-6));
  CHECK(r.covariance(0, 1) == doctest::Approx(cov(0, 1)).epsilon(1e-6));
}

TEST_CASE("pulls of repeated noisy fits have unit variance") {
  std::mt19937_64 rng(17);
  const int repeats = 200;
  double sum_a = 0.0, sum2_a = 0.0, sum_t = 0.0, sum2_t = 0.0;
  for (int k = 0; k < repeats; ++k) {
    const auto d = decay_data(rng, 0.02);
    const auto m = decay_model(d);
    const auto r = least_squares(m, decay_params(), Eigen::VectorXd::Constant(40, 0.02));
    const double pa = (r.value("A") - 2.0) / r.ci("A");
    const double pt = (r.value("tau") - 0.7) / r.ci("tau");
    sum_a += pa;
    sum2_a += pa * pa;
    sum_t += pt;
    sum2_t += pt * pt;
  }
  const double var_a = sum2_a / repeats - (sum_a / repeats) * (sum_a / repeats);
  const double var_t = sum2_t / repeats - (sum_t / repeats) * (sum_t / repeats);
  CHECK(var_a == doctest::Approx(1.0).epsilon(0.2));
  CHECK(var_t == doctest::Approx(1.0).epsilon(0.2));
  CHECK(std::abs(sum_a / repeats) < 0.25);
  CHECK(std::abs(sum_t / repeats) < 0.25);
}

TEST_CASE("starting at the optimum stays there") {
  std::mt19937_64 rng(2);
  const auto d = decay_data(rng, 0.01);
  const auto m = decay_model(d);
  const auto first = least_squares(m, decay_params(), Eigen::VectorXd::Constant(40, 0.01));
  auto again_params = decay_params();
  again_params[0].initial = first.values[0];
  again_params[1].initial = first.values[1];
  const auto second = least_squares(m, again_params, Eigen::VectorXd::Constant(40, 0.01));
  CHECK(second.values[0] == doctest::Approx(first.values[0]).epsilon(1e-10));
  CHECK(second.values[1] == doctest::Approx(first.values[1]).epsilon(1e-10));
}

TEST_CASE("analytic and finite-difference Jacobians agree") {
  std::mt19937_64 rng(9);
  const auto d = decay_data(rng, 0.01);
  const auto m = decay_model(d);
  Eigen::VectorXd x(2);
  x << 1.7, 0.9;
  Eigen::MatrixXd analytic(40, 2);
  m.jacobian(x, analytic);
  const Eigen::MatrixXd fd = finite_difference_jacobian(m, x);
  CHECK((analytic - fd).cwiseAbs().maxCoeff() < 1e-7);

  LeastSquaresOptions opt;
  opt.analytic_jacobian = false;
  const auto with_fd = least_squares(m, decay_params(), Eigen::VectorXd::Constant(40, 0.01), opt);
  const auto with_an = least_squares(m, decay_params(), Eigen::VectorXd::Constant(40, 0.01));
  CHECK(with_fd.value("tau") == doctest::Approx(with_an.value("tau")).epsilon(1e-7));
}

TEST_CASE("rank-deficient problems name the offending parameters") {
  Line d;
  for (int i = 0; i < 8; ++i) {
    d.x.push_back(i);
    d.y.push_back(2.0 + i);
  }
  // a and c enter only through their sum
  const FunctionModel m(8, [&d](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    for (std::size_t i = 0; i < 8; ++i) r[i] = p[0] + p[2] + p[1] * d.x[i] - d.y[i];
  });
  const std::vector<ParameterSpec> params{{"a", 0.5, ParamTransform::Identity},
                                          {"b", 0.5, ParamTransform::Identity},
                                          {"c", 0.5, ParamTransform::Identity}};
  try {
    least_squares(m, params, Eigen::VectorXd::Ones(8));
    FAIL("expected SingularJacobian");
  } catch (const SingularJacobian& e) {
    const auto& names = e.parameters();
    CHECK(std::find(names.begin(), names.end(), "a") != names.end());
    CHECK(std::find(names.begin(), names.end(), "c") != names.end());
    CHECK(std::find(names.begin(), names.end(), "b") == names.end());
  }

  LeastSquaresOptions opt;
  opt.fail_on_singular = false;
  const auto r = least_squares(m, params, Eigen::VectorXd::Ones(8), opt);
  CHECK(r.unidentifiable.size() == 2);
  CHECK(std::isinf(r.ci("a")));
  CHECK(std::isfinite(r.ci("b")));
  CHECK_THROWS_AS(throw_if_unidentifiable(r), UnidentifiableParameter);
}

TEST_CASE("iteration budget and input validation") {
  std::mt19937_64 rng(4);
  const auto d = decay_data(rng, 0.01);
  const auto m = decay_model(d);
  auto params = decay_params();
  params[1].initial = 50.0;
  LeastSquaresOptions opt;
  opt.max_iterations = 1;
  CHECK_THROWS_AS(least_squares(m, params, Eigen::VectorXd::Constant(40, 0.01), opt),
                  NoConvergence);
  opt.throw_on_no_convergence = false;
  const auto r = least_squares(m, params, Eigen::VectorXd::Constant(40, 0.01), opt);
  CHECK_FALSE(r.converged);

  Decay tiny{{0.0}, {1.0}};
  const auto small = decay_model(tiny);
  CHECK_THROWS_AS(least_squares(small, decay_params(), Eigen::VectorXd::Ones(1)),
                  UnidentifiableParameter);
  CHECK_THROWS_AS(least_squares(m, decay_params(), Eigen::VectorXd::Zero(40)), InvalidParameter);
  CHECK_THROWS_AS(least_squares(m, decay_params(), Eigen::VectorXd::Ones(3)), InvalidParameter);
  auto bad = decay_params();
  bad[0].initial = -1.0;
  CHECK_THROWS_AS(least_squares(m, bad, Eigen::VectorXd::Ones(40)), InvalidParameter);
}

TEST_CASE("sigma scale under the two covariance conventions") {
  std::mt19937_64 rng(12);
  const auto d = decay_data(rng, 0.02);
  const auto m = decay_model(d);
  const Eigen::VectorXd s1 = Eigen::VectorXd::Constant(40, 0.02);
  const Eigen::VectorXd s2 = 2.0 * s1;

  LeastSquaresOptions abs;
  abs.scaling = CovarianceScaling::AbsoluteSigma;
  const auto a1 = least_squares(m, decay_params(), s1, abs);
  const auto a2 = least_squares(m, decay_params(), s2, abs);
  CHECK(a2.ci("tau") == doctest::Approx(2.0 * a1.ci("tau")).epsilon(1e-6));
  CHECK(a2.value("tau") == doctest::Approx(a1.value("tau")).epsilon(1e-9));

  // reduced chi-square scaling absorbs an overall sigma factor
  const auto r1 = least_squares(m, decay_params(), s1);
  const auto r2 = least_squares(m, decay_params(), s2);
  CHECK(r2.ci("tau") == doctest::Approx(r1.ci("tau")).epsilon(1e-6));
}
