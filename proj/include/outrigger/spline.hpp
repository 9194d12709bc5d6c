#pragma once

#include <vector>

#include "outrigger/types.hpp"

namespace outrigger {

/// Natural cubic spline space on fixed knots t_1 < ... < t_K, parametrised by
/// the values g at the knots. Second derivatives at the interior knots are
/// gamma = R^{-1} Q^T g and vanish at t_1 and t_K; outside [t_1, t_K] the
/// spline continues linearly.
class NaturalSplineBasis {
 public:
  NaturalSplineBasis() = default;
  explicit NaturalSplineBasis(std::vector<double> knots);

  Index size() const { return static_cast<Index>(knots_.size()); }
  const std::vector<double>& knots() const { return knots_; }

  /// Fills value[k] and slope[k] for every basis function at e (each of
  /// length size()).
  void eval(double e, double* value, double* slope) const;

  /// Full vector of second derivatives at the knots for coefficients g.
  Vector second_derivatives(const Vector& g) const;

  /// Exact curvature penalty: int_{t_1}^{t_K} s''(e)^2 de = g^T Omega g.
  const Matrix& penalty() const { return omega_; }

 private:
  Index interval(double e) const;

  std::vector<double> knots_;
  Matrix gamma_map_;  // (K-2) x K, R^{-1} Q^T
  Matrix omega_;      // K x K
};

/// A fitted natural cubic spline with precomputed second derivatives.
struct NaturalSpline {
  std::vector<double> knots;
  Vector values;
  Vector second;

  double eval(double e) const;
  double deriv(double e) const;
  double second_deriv(double e) const;
  /// int_{t_1}^{t_K} s''^2 in closed form.
  double curvature() const;
  /// Minimum of s' over [t_1, t_K] (s' is piecewise quadratic).
  double min_slope() const;
};

}  // namespace outrigger
