#include "outrigger/spline.hpp"

#include <algorithm>
#include <cmath>

#include "outrigger/error.hpp"

namespace outrigger {

NaturalSplineBasis::NaturalSplineBasis(std::vector<double> knots) : knots_(std::move(knots)) {
  const Index K = size();
  require(K >= 2, "natural spline needs at least two knots");
  for (Index j = 0; j + 1 < K; ++j)
    require(knots_[static_cast<std::size_t>(j + 1)] > knots_[static_cast<std::size_t>(j)],
            "spline knots must be strictly increasing");

  omega_ = Matrix::Zero(K, K);
  if (K == 2) {
    gamma_map_.resize(0, K);
    return;
  }
  auto h = [&](Index j) {
    return knots_[static_cast<std::size_t>(j + 1)] - knots_[static_cast<std::size_t>(j)];
  };
  const Index m = K - 2;
  Matrix Q = Matrix::Zero(K, m);
  Matrix R = Matrix::Zero(m, m);
  for (Index c = 0; c < m; ++c) {
    const Index j = c + 1;
    Q(j - 1, c) = 1.0 / h(j - 1);
    Q(j, c) = -1.0 / h(j - 1) - 1.0 / h(j);
    Q(j + 1, c) = 1.0 / h(j);
    R(c, c) = (h(j - 1) + h(j)) / 3.0;
    if (c + 1 < m) {
      R(c, c + 1) = h(j) / 6.0;
      R(c + 1, c) = h(j) / 6.0;
    }
  }
  // R is strictly diagonally dominant, so LLT is safe.
  const Eigen::LLT<Matrix> llt(R);
  gamma_map_ = llt.solve(Q.transpose());
  omega_ = Q * gamma_map_;
  omega_ = 0.5 * (omega_ + omega_.transpose()).eval();
}

Index NaturalSplineBasis::interval(double e) const {
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), e);
  Index j = static_cast<Index>(it - knots_.begin()) - 1;
  return std::clamp<Index>(j, 0, size() - 2);
}

void NaturalSplineBasis::eval(double e, double* value, double* slope) const {
  const Index K = size();
  std::fill(value, value + K, 0.0);
  std::fill(slope, slope + K, 0.0);
  const double lo = knots_.front();
  const double hi = knots_.back();
  const double x = std::clamp(e, lo, hi);
  const Index j = interval(x);
  const double t0 = knots_[static_cast<std::size_t>(j)];
  const double t1 = knots_[static_cast<std::size_t>(j + 1)];
  const double h = t1 - t0;
  const double A = (t1 - x) / h;
  const double B = 1.0 - A;

  value[j] += A;
  value[j + 1] += B;
  slope[j] -= 1.0 / h;
  slope[j + 1] += 1.0 / h;

  auto add_row = [&](Index knot, double vc, double sc) {
    if (knot < 1 || knot > K - 2) return;
    const auto row = gamma_map_.row(knot - 1);
    for (Index k = 0; k < K; ++k) {
      value[k] += vc * row(k);
      slope[k] += sc * row(k);
    }
  };
  add_row(j, (A * A * A - A) * h * h / 6.0, -(3.0 * A * A - 1.0) * h / 6.0);
  add_row(j + 1, (B * B * B - B) * h * h / 6.0, (3.0 * B * B - 1.0) * h / 6.0);

  if (e != x) {
    const double dx = e - x;
    for (Index k = 0; k < K; ++k) value[k] += slope[k] * dx;
  }
}

Vector NaturalSplineBasis::second_derivatives(const Vector& g) const {
  Vector out = Vector::Zero(size());
  if (size() > 2) out.segment(1, size() - 2) = gamma_map_ * g;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Piece {
  double t0, h, A, B;
  Index j;
};

Piece locate(const std::vector<double>& knots, double x) {
  const auto it = std::upper_bound(knots.begin(), knots.end(), x);
  Index j = static_cast<Index>(it - knots.begin()) - 1;
  j = std::clamp<Index>(j, 0, static_cast<Index>(knots.size()) - 2);
  const double t0 = knots[static_cast<std::size_t>(j)];
  const double h = knots[static_cast<std::size_t>(j + 1)] - t0;
  const double A = (t0 + h - x) / h;
  return {t0, h, A, 1.0 - A, j};
}

double slope_at(const NaturalSpline& s, const Piece& p) {
  return (s.values(p.j + 1) - s.values(p.j)) / p.h +
         (-(3.0 * p.A * p.A - 1.0) * s.second(p.j) + (3.0 * p.B * p.B - 1.0) * s.second(p.j + 1)) *
             p.h / 6.0;
}

}  // namespace

double NaturalSpline::eval(double e) const {
  const double lo = knots.front();
  const double hi = knots.back();
  const double x = std::clamp(e, lo, hi);
  const Piece p = locate(knots, x);
  double v = p.A * values(p.j) + p.B * values(p.j + 1) +
             ((p.A * p.A * p.A - p.A) * second(p.j) + (p.B * p.B * p.B - p.B) * second(p.j + 1)) *
                 p.h * p.h / 6.0;
  if (e != x) v += slope_at(*this, p) * (e - x);
  return v;
}

double NaturalSpline::deriv(double e) const {
  const double x = std::clamp(e, knots.front(), knots.back());
  return slope_at(*this, locate(knots, x));
}

double NaturalSpline::second_deriv(double e) const {
  if (e < knots.front() || e > knots.back()) return 0.0;
  const Piece p = locate(knots, e);
  return p.A * second(p.j) + p.B * second(p.j + 1);
}

double NaturalSpline::curvature() const {
  double s = 0.0;
  for (std::size_t j = 0; j + 1 < knots.size(); ++j) {
    const double h = knots[j + 1] - knots[j];
    const double a = second(static_cast<Index>(j));
    const double b = second(static_cast<Index>(j + 1));
    s += h * (a * a + a * b + b * b) / 3.0;
  }
  return s;
}

double NaturalSpline::min_slope() const {
  double m = deriv(knots.front());
  for (std::size_t j = 0; j + 1 < knots.size(); ++j) {
    m = std::min(m, deriv(knots[j + 1]));
    const double a = second(static_cast<Index>(j));
    const double b = second(static_cast<Index>(j + 1));
    // s'' is linear on the piece; s' has its extremum where s'' crosses zero.
    if ((a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0)) {
      const double frac = a / (a - b);
      m = std::min(m, deriv(knots[j] + frac * (knots[j + 1] - knots[j])));
    }
  }
  return m;
}

}  // namespace outrigger
