#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "outrigger/types.hpp"

namespace outrigger {

enum class KernelName { Epanechnikov, Uniform, Triweight };

KernelName parse_kernel_name(std::string_view name);
std::string to_string(KernelName name);

/// Radial order-2 kernel K(v) = c * g(||v||_q) supported on the closed unit
/// l_q ball. q may be +infinity.
struct KernelSpec {
  KernelName name = KernelName::Epanechnikov;
  int dim = 1;
  double norm_q = 2.0;

  void validate() const;

  /// Normalising constant c such that K integrates to one.
  double normalizer() const;
  /// Radial profile g(r), r in [0, 1].
  double profile(double r) const;
};

/// l_q norm; q = infinity gives the max norm.
double lq_norm(const double* v, int d, double q);
inline double lq_norm(const Vector& v, double q) {
  return lq_norm(v.data(), static_cast<int>(v.size()), q);
}

/// Volume of the unit l_q ball in R^d.
double unit_ball_volume(int d, double q);

// ---------------------------------------------------------------------------
// Polynomial basis Q(v) = (v^alpha / alpha! : |alpha|_1 <= p), multi-indices in
// increasing lexicographic order (so alpha = 0 comes first).

class PolyBasis {
 public:
  PolyBasis(int degree, int dim);

  int degree() const { return degree_; }
  int dim() const { return dim_; }
  /// p_bar = binomial(d + p, p).
  Index size() const { return static_cast<Index>(alphas_.size()); }
  const std::vector<std::vector<int>>& multi_indices() const { return alphas_; }

  void eval(const double* v, double* out) const;
  Vector eval(const Vector& v) const;

 private:
  int degree_;
  int dim_;
  std::vector<std::vector<int>> alphas_;
  std::vector<double> inv_factorial_;
};

/// Q(nu) for the given degree; nu.size() is the dimension.
Vector poly_basis(int p, int d, const Vector& nu);

double eval_kernel(const KernelSpec& spec, const Vector& nu);

struct ScaledEval {
  double weight;  // K_h(u)
  Vector basis;   // Q_h(u)
};

/// K_h(u) = K(u/h)/h^d and Q_h(u) = Q(u/h).
ScaledEval scaled_eval(const KernelSpec& spec, int p, double h, const Vector& u);

// ---------------------------------------------------------------------------

/// Uniform annulus kernel kappa_lambda = v_dq/(lambda^d - 1) on 1 < ||v||_q <= lambda.
struct OutriggerKernel {
  double lambda = 8.0;
  int dim = 1;
  double norm_q = 2.0;

  OutriggerKernel() = default;
  OutriggerKernel(double lambda, int dim, double norm_q);

  /// v_dq = Gamma(1 + d/q) / (2 Gamma(1 + 1/q))^d, the reciprocal of the
  /// unit-ball volume.
  double v_dq() const;
  /// Height of the kernel on its support; equals R_2(kappa_lambda).
  double height() const;
  double r2() const { return height(); }

  double eval(const Vector& nu) const;
};

/// kappa_{h,lambda}(u) = kappa_lambda(u/h)/h^d.
double outrigger_eval(const OutriggerKernel& ok, double h, const Vector& u);

struct KernelMoments {
  double r2 = 0.0;   // int K^2
  Vector u;          // int K Q
  Matrix s1;         // int K Q Q^T
  Matrix s2;         // int K^2 Q Q^T
  double mu_beta = 0.0;  // int K(v) ||v||_beta^beta
};

/// Closed-form moments of the radial kernel via generalised polar
/// coordinates (Dirichlet integrals over the l_q ball).
KernelMoments kernel_moments(const KernelSpec& spec, int p, double beta_star);

/// int K^2.
double kernel_r2(const KernelSpec& spec);

/// lambda_0(K) = (1 + v_dq / R_2(K))^{1/d}, where R_2(kappa_lambda) = R_2(K).
double lambda0(const KernelSpec& spec);

}  // namespace outrigger
