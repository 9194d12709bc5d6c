#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "outrigger/error.hpp"

namespace outrigger::quad {

/// Gauss-Legendre nodes and weights on [-1, 1].
struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule (Newton iteration on P_n).
const Rule& gauss_legendre(int n);

/// Adaptive Gauss-Kronrod on [a, b]; either end may be infinite.
template <class F>
double adaptive(F&& f, double a, double b, double rel_tol = 1e-12, unsigned max_depth = 20) {
  double err = 0.0;
  double l1 = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, a, b, max_depth, rel_tol, &err, &l1);
  if (!std::isfinite(v)) fail(ErrorCode::QuadratureFailure, "quadrature produced a non-finite value");
  if (err > 1e-6 * std::max(1.0, l1))
    fail(ErrorCode::QuadratureFailure, "adaptive quadrature did not converge");
  return v;
}

/// Integral over the real line split at the sorted breakpoints, with
/// semi-infinite pieces at both ends.
template <class F>
double over_real_line(F&& f, std::vector<double> breaks, double rel_tol = 1e-12) {
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  const double inf = std::numeric_limits<double>::infinity();
  double total = adaptive(f, -inf, breaks.front(), rel_tol);
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k)
    total += adaptive(f, breaks[k], breaks[k + 1], rel_tol);
  total += adaptive(f, breaks.back(), inf, rel_tol);
  return total;
}

/// Composite fixed-order Gauss-Legendre over consecutive breakpoints.
template <class F>
double composite(F&& f, const std::vector<double>& breaks, int order = 20) {
  const Rule& rule = gauss_legendre(order);
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double a = breaks[k];
    const double b = breaks[k + 1];
    if (!(b > a)) continue;
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double s = 0.0;
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) s += rule.weights[j] * f(mid + half * rule.nodes[j]);
    total += half * s;
  }
  return total;
}

}  // namespace outrigger::quad
