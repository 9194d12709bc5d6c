#pragma once

#include <vector>

#include "outrigger/error.hpp"
#include "outrigger/kernel.hpp"
#include "outrigger/types.hpp"

namespace outrigger {

struct LpFit {
  Vector theta;             // coefficients in the Q_h basis
  double estimate = 0.0;    // theta(0)
  Index n_effective = 0;    // points with positive kernel weight
  double gram_condition = 0.0;
};

/// Solves a small symmetric positive semi-definite system G x = b with the
/// shared jitter policy: if cond(G) > 1e12, add 1e-10 * trace(G)/dim to the
/// diagonal once; if it is still above 1e12 throw `singular_code`.
/// Returns the condition number that was accepted.
double solve_spd_with_jitter(const Matrix& G, const Vector& b, Vector& x, ErrorCode singular_code,
                             const char* what);

/// Range queries over a dataset sorted by its first covariate. Since
/// |u_1| <= ||u||_q for every q >= 1, the window on the first coordinate
/// contains every point of the l_q ball.
class NeighborIndex {
 public:
  explicit NeighborIndex(const Matrix& X);

  /// Indices i (ascending in first coordinate, ties by row) with
  /// ||X_i - center||_q <= radius.
  void query(const double* center, double radius, double q, std::vector<Index>& out) const;

 private:
  const Matrix* X_;
  std::vector<Index> order_;
  std::vector<double> first_;
};

/// Local polynomial smoother bound to one training set.
class LocalPolynomial {
 public:
  LocalPolynomial(const Dataset& train, double h, int p, KernelSpec kernel);

  LpFit fit(const double* x0) const;
  LpFit fit(const Vector& x0) const { return fit(x0.data()); }

  const Dataset& data() const { return *data_; }
  double bandwidth() const { return h_; }
  int degree() const { return p_; }

 private:
  const Dataset* data_;
  double h_;
  int p_;
  KernelSpec kernel_;
  PolyBasis basis_;
  double kernel_c_;
  NeighborIndex index_;
};

/// Weighted least-squares fit of the degree-p local polynomial at x0.
LpFit fit_lp(const Dataset& data, const Vector& x0, double h, int p, const KernelSpec& K);

/// Local polynomial estimates at each row of `points` (m x d). Rows are fitted
/// in parallel; a failing row is reported with its index.
Vector predict_lp_many(const Dataset& train, const Matrix& points, double h, int p,
                       const KernelSpec& K);

/// Single-threaded reference for predict_lp_many.
Vector predict_lp_many_serial(const Dataset& train, const Matrix& points, double h, int p,
                              const KernelSpec& K);

}  // namespace outrigger
