#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace outrigger {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Covariate/response sample: X is n x d, Y has length n.
struct Dataset {
  Matrix X;
  Vector Y;

  Index size() const { return Y.size(); }
  Index dim() const { return X.cols(); }

  /// Checks shapes, n >= 1 and finiteness; throws on violation.
  void validate() const;

  /// Rows selected by `idx`, in the given order.
  Dataset subset(const std::vector<Index>& idx) const;
};

/// Rounds to 12 significant digits; used wherever numbers leave the library
/// as text so that re-parsing gives back the same double.
double round_sig12(double v);

}  // namespace outrigger
