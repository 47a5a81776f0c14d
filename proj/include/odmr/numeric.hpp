#pragma once

#include <functional>
#include <span>
#include <vector>

namespace odmr::numeric {

using ScalarFunction = std::function<double(double)>;

// Full width at half depth of a unimodal lineshape that is symmetric about
// `center` (dip or peak). The baseline is taken far in the wing. Crossings
// are bracketed by a geometric scan starting at `width_hint * 1e-6` and
// refined by bisection until the bracket is below `rel_tol` of the offset.
double symmetric_fwhm(const ScalarFunction& f, double center, double width_hint,
                      double rel_tol = 1e-14);

// Same, with an explicitly supplied baseline value.
double symmetric_fwhm(const ScalarFunction& f, double center, double baseline,
                      double width_hint, double rel_tol);

// FWHM of a sampled dip (baseline `baseline`) using linear interpolation
// of the two half-depth crossings around the minimum.
double sampled_fwhm(std::span<const double> x, std::span<const double> y, double baseline);

// Maximizes a unimodal function on [lo, hi]. Returns the argmax.
double golden_section_max(const ScalarFunction& f, double lo, double hi, double tol = 1e-10);

// Adaptive Simpson quadrature over [a, b], split first at the given interior
// breakpoints (which may be unsorted and may fall outside the interval).
double adaptive_simpson(const ScalarFunction& f, double a, double b, double abs_tol,
                        std::span<const double> breakpoints = {});

std::vector<double> linspace(double lo, double hi, std::size_t n);
std::vector<double> logspace(double lo, double hi, std::size_t n);

}  // namespace odmr::numeric
