#include "odmr/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "odmr/error.hpp"

namespace odmr::numeric {

namespace {

constexpr double kWingFactor = 1e9;

double depth_from(const ScalarFunction& f, double x, double baseline) {
  return std::abs(f(x) - baseline);
}

struct SimpsonPanel {
  double a, b, fa, fm, fb, whole;
};

double simpson_recurse(const ScalarFunction& f, const SimpsonPanel& p, double tol, int depth) {
  const double m = 0.5 * (p.a + p.b);
  const double lm = 0.5 * (p.a + m);
  const double rm = 0.5 * (m + p.b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - p.a) / 6.0 * (p.fa + 4.0 * flm + p.fm);
  const double right = (p.b - m) / 6.0 * (p.fm + 4.0 * frm + p.fb);
  const double delta = left + right - p.whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return simpson_recurse(f, {p.a, m, p.fa, flm, p.fm, left}, 0.5 * tol, depth - 1) +
         simpson_recurse(f, {m, p.b, p.fm, frm, p.fb, right}, 0.5 * tol, depth - 1);
}

}  // namespace

double symmetric_fwhm(const ScalarFunction& f, double center, double width_hint,
                      double rel_tol) {
  const double baseline = f(center + kWingFactor * width_hint);
  return symmetric_fwhm(f, center, baseline, width_hint, rel_tol);
}

double symmetric_fwhm(const ScalarFunction& f, double center, double baseline,
                      double width_hint, double rel_tol) {
  if (!(width_hint > 0.0)) throw InvalidParameter("symmetric_fwhm: width_hint must be > 0");
  const double half = 0.5 * depth_from(f, center, baseline);
  if (!(half > 0.0)) throw InvalidParameter("symmetric_fwhm: lineshape has zero depth");

  double lo = 0.0;
  double hi = width_hint * 1e-6;
  int guard = 0;
  while (depth_from(f, center + hi, baseline) > half) {
    lo = hi;
    hi *= 2.0;
    if (++guard > 200) throw NoConvergence("symmetric_fwhm: no half-depth crossing found");
  }
  for (int i = 0; i < 300 && (hi - lo) > rel_tol * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (depth_from(f, center + mid, baseline) > half) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo + hi;  // 2 * midpoint
}

double sampled_fwhm(std::span<const double> x, std::span<const double> y, double baseline) {
  if (x.size() != y.size() || x.size() < 3) {
    throw InvalidParameter("sampled_fwhm: need at least three samples of equal length");
  }
  const auto imin = static_cast<std::size_t>(std::min_element(y.begin(), y.end()) - y.begin());
  const double half = baseline - 0.5 * (baseline - y[imin]);

  auto crossing = [&](std::size_t i, std::size_t j) {
    // y[i] <= half < y[j] (or reversed)
    const double t = (half - y[i]) / (y[j] - y[i]);
    return x[i] + t * (x[j] - x[i]);
  };

  std::size_t r = imin;
  while (r + 1 < y.size() && y[r + 1] <= half) ++r;
  if (r + 1 >= y.size()) throw InsufficientData("sampled_fwhm: right half-depth crossing outside grid");
  std::size_t l = imin;
  while (l > 0 && y[l - 1] <= half) --l;
  if (l == 0) throw InsufficientData("sampled_fwhm: left half-depth crossing outside grid");
  return crossing(r, r + 1) - crossing(l, l - 1);
}

double golden_section_max(const ScalarFunction& f, double lo, double hi, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while ((b - a) > tol * (std::abs(a) + std::abs(b) + tol)) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

double adaptive_simpson(const ScalarFunction& f, double a, double b, double abs_tol,
                        std::span<const double> breakpoints) {
  if (!(b > a)) return 0.0;
  std::vector<double> nodes{a, b};
  for (double x : breakpoints) {
    if (x > a && x < b) nodes.push_back(x);
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

  const double panel_tol = abs_tol / static_cast<double>(nodes.size() - 1);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const double pa = nodes[i];
    const double pb = nodes[i + 1];
    const double fa = f(pa);
    const double fb = f(pb);
    const double fm = f(0.5 * (pa + pb));
    const double whole = (pb - pa) / 6.0 * (fa + 4.0 * fm + fb);
    total += simpson_recurse(f, {pa, pb, fa, fm, fb, whole}, panel_tol, 50);
  }
  return total;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  out.back() = hi;
  return out;
}

std::vector<double> logspace(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0) || !(hi > 0.0)) throw InvalidParameter("logspace: bounds must be positive");
  auto exps = linspace(std::log(lo), std::log(hi), n);
  std::vector<double> out(n);
  std::transform(exps.begin(), exps.end(), out.begin(), [](double e) { return std::exp(e); });
  if (n > 0) {
    out.front() = lo;
    out.back() = hi;
  }
  return out;
}

}  // namespace odmr::numeric
