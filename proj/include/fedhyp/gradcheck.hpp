#pragma once

#include <cmath>
#include <functional>

#include "fedhyp/common.hpp"

// Central finite-difference comparison harness for the closed-form
// gradients in this library.
namespace fedhyp::hyp {

// Max relative error between `analytic` and central differences of the
// scalar function `f` around `x0` with step `h`. Throws on non-finite
// analytic entries.
inline double grad_check(const std::function<double(const Vec&)>& f,
                         const Vec& x0, const Vec& analytic, double h = 1e-5) {
  if (analytic.size() != x0.size())
    throw UsageError("grad_check: gradient size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    if (!std::isfinite(analytic[i]))
      throw NumericalError("grad_check: non-finite analytic gradient");
    Vec xp = x0, xm = x0;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (f(xp) - f(xm)) / (2.0 * h);
    const double denom =
        std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - fd) / denom);
  }
  return worst;
}

// Scalar-parameter convenience overload (e.g. the curvature).
inline double grad_check_scalar(const std::function<double(double)>& f,
                                double x0, double analytic, double h = 1e-5) {
  if (!std::isfinite(analytic))
    throw NumericalError("grad_check: non-finite analytic gradient");
  const double fd = (f(x0 + h) - f(x0 - h)) / (2.0 * h);
  const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-6});
  return std::abs(analytic - fd) / denom;
}

}  // namespace fedhyp::hyp
