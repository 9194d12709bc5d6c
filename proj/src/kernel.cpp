#include "outrigger/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "outrigger/error.hpp"

namespace outrigger {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Profiles are polynomials in r^2: g(r) = sum_k coef[k] r^{2k}.
std::vector<double> profile_coefficients(KernelName name) {
  switch (name) {
    case KernelName::Epanechnikov:
      return {1.0, -1.0};
    case KernelName::Uniform:
      return {1.0};
    case KernelName::Triweight:
      return {1.0, -3.0, 3.0, -1.0};
  }
  return {1.0};
}

std::vector<double> square_poly(const std::vector<double>& a) {
  std::vector<double> out(2 * a.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) out[i + j] += a[i] * a[j];
  return out;
}

// int_0^1 g(r) r^m dr for g given by coefficients in r^2.
double radial_moment(const std::vector<double>& coef, double m) {
  double s = 0.0;
  for (std::size_t k = 0; k < coef.size(); ++k)
    s += coef[k] / (m + 2.0 * static_cast<double>(k) + 1.0);
  return s;
}

// Gamma(a/q)/q, with its q -> infinity limit 1/a.
double gamma_over_q(double a, double q) {
  if (std::isinf(q)) return 1.0 / a;
  return std::tgamma(a / q) / q;
}

double gamma_one_plus(double x, double q) {
  if (std::isinf(q)) return 1.0;
  return std::tgamma(1.0 + x / q);
}

// int over the unit l_q ball of prod_j |v_j|^{a_j}, a_j >= 0 real.
double ball_abs_moment(const std::vector<double>& a, double q) {
  const int d = static_cast<int>(a.size());
  double num = std::pow(2.0, d);
  double k = 0.0;
  for (double aj : a) {
    num *= gamma_over_q(aj + 1.0, q);
    k += aj;
  }
  return num / gamma_one_plus(static_cast<double>(d) + k, q);
}

// int over the ball of v^alpha; zero when any exponent is odd.
double ball_monomial(const std::vector<int>& alpha, double q) {
  std::vector<double> a;
  a.reserve(alpha.size());
  for (int ai : alpha) {
    if (ai % 2 != 0) return 0.0;
    a.push_back(static_cast<double>(ai));
  }
  return ball_abs_moment(a, q);
}

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

}  // namespace

KernelName parse_kernel_name(std::string_view name) {
  if (name == "epanechnikov") return KernelName::Epanechnikov;
  if (name == "uniform") return KernelName::Uniform;
  if (name == "triweight") return KernelName::Triweight;
  fail(ErrorCode::UnknownName, "unknown kernel '" + std::string(name) + "'");
}

std::string to_string(KernelName name) {
  switch (name) {
    case KernelName::Epanechnikov:
      return "epanechnikov";
    case KernelName::Uniform:
      return "uniform";
    case KernelName::Triweight:
      return "triweight";
  }
  return "?";
}

double lq_norm(const double* v, int d, double q) {
  if (d == 1) return std::abs(v[0]);
  if (std::isinf(q)) {
    double m = 0.0;
    for (int j = 0; j < d; ++j) m = std::max(m, std::abs(v[j]));
    return m;
  }
  if (q == 2.0) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += v[j] * v[j];
    return std::sqrt(s);
  }
  if (q == 1.0) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += std::abs(v[j]);
    return s;
  }
  double s = 0.0;
  for (int j = 0; j < d; ++j) s += std::pow(std::abs(v[j]), q);
  return std::pow(s, 1.0 / q);
}

double unit_ball_volume(int d, double q) {
  return ball_abs_moment(std::vector<double>(static_cast<std::size_t>(d), 0.0), q);
}

void KernelSpec::validate() const {
  require(dim >= 1, "kernel dimension must be positive");
  require(norm_q >= 1.0, "kernel norm q must be >= 1");
}

double KernelSpec::normalizer() const {
  const double d = dim;
  // int_{B_q} g(||v||) dv = d * vol(B_q) * int_0^1 g(r) r^{d-1} dr
  const double mass =
      d * unit_ball_volume(dim, norm_q) * radial_moment(profile_coefficients(name), d - 1.0);
  return 1.0 / mass;
}

double KernelSpec::profile(double r) const {
  const double r2 = r * r;
  switch (name) {
    case KernelName::Epanechnikov:
      return 1.0 - r2;
    case KernelName::Uniform:
      return 1.0;
    case KernelName::Triweight: {
      const double t = 1.0 - r2;
      return t * t * t;
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------

PolyBasis::PolyBasis(int degree, int dim) : degree_(degree), dim_(dim) {
  require(degree >= 0, "polynomial degree must be non-negative");
  require(dim >= 1, "dimension must be positive");
  std::vector<int> alpha(static_cast<std::size_t>(dim), 0);
  // Lexicographic enumeration: the last coordinate varies fastest.
  std::function<void(int, int)> rec = [&](int j, int remaining) {
    if (j == dim) {
      alphas_.push_back(alpha);
      return;
    }
    for (int a = 0; a <= remaining; ++a) {
      alpha[static_cast<std::size_t>(j)] = a;
      rec(j + 1, remaining - a);
    }
    alpha[static_cast<std::size_t>(j)] = 0;
  };
  rec(0, degree);
  inv_factorial_.reserve(alphas_.size());
  for (const auto& a : alphas_) {
    double f = 1.0;
    for (int ai : a) f *= factorial(ai);
    inv_factorial_.push_back(1.0 / f);
  }
}

void PolyBasis::eval(const double* v, double* out) const {
  for (std::size_t k = 0; k < alphas_.size(); ++k) {
    double term = inv_factorial_[k];
    const auto& a = alphas_[k];
    for (int j = 0; j < dim_; ++j)
      for (int e = 0; e < a[static_cast<std::size_t>(j)]; ++e) term *= v[j];
    out[k] = term;
  }
}

Vector PolyBasis::eval(const Vector& v) const {
  require(v.size() == dim_, "basis evaluation: dimension mismatch", ErrorCode::DimensionMismatch);
  Vector out(size());
  eval(v.data(), out.data());
  return out;
}

Vector poly_basis(int p, int d, const Vector& nu) { return PolyBasis(p, d).eval(nu); }

double eval_kernel(const KernelSpec& spec, const Vector& nu) {
  require(nu.size() == spec.dim, "kernel evaluation: dimension mismatch",
          ErrorCode::DimensionMismatch);
  const double r = lq_norm(nu, spec.norm_q);
  if (r > 1.0) return 0.0;
  return spec.normalizer() * spec.profile(r);
}

ScaledEval scaled_eval(const KernelSpec& spec, int p, double h, const Vector& u) {
  require(h > 0.0, "bandwidth must be positive");
  require(u.size() == spec.dim, "scaled evaluation: dimension mismatch",
          ErrorCode::DimensionMismatch);
  const Vector nu = u / h;
  return {eval_kernel(spec, nu) / std::pow(h, spec.dim), poly_basis(p, spec.dim, nu)};
}

// ---------------------------------------------------------------------------

OutriggerKernel::OutriggerKernel(double lambda_, int dim_, double norm_q_)
    : lambda(lambda_), dim(dim_), norm_q(norm_q_) {
  require(lambda > 1.0, "outrigger parameter lambda must exceed 1");
  require(dim >= 1, "outrigger kernel dimension must be positive");
  require(norm_q >= 1.0, "outrigger kernel norm q must be >= 1");
}

double OutriggerKernel::v_dq() const {
  if (std::isinf(norm_q)) return std::pow(0.5, dim);
  return std::tgamma(1.0 + dim / norm_q) / std::pow(2.0 * std::tgamma(1.0 + 1.0 / norm_q), dim);
}

double OutriggerKernel::height() const {
  if (std::isinf(lambda)) return 0.0;
  return v_dq() / (std::pow(lambda, dim) - 1.0);
}

double OutriggerKernel::eval(const Vector& nu) const {
  require(nu.size() == dim, "outrigger evaluation: dimension mismatch",
          ErrorCode::DimensionMismatch);
  const double r = lq_norm(nu, norm_q);
  return (r > 1.0 && r <= lambda) ? height() : 0.0;
}

double outrigger_eval(const OutriggerKernel& ok, double h, const Vector& u) {
  require(ok.lambda > 1.0, "outrigger parameter lambda must exceed 1");
  require(h > 0.0, "bandwidth must be positive");
  return ok.eval(u / h) / std::pow(h, ok.dim);
}

// ---------------------------------------------------------------------------

double kernel_r2(const KernelSpec& spec) {
  spec.validate();
  const double c = spec.normalizer();
  const double d = spec.dim;
  return c * c * d * unit_ball_volume(spec.dim, spec.norm_q) *
         radial_moment(square_poly(profile_coefficients(spec.name)), d - 1.0);
}

KernelMoments kernel_moments(const KernelSpec& spec, int p, double beta_star) {
  spec.validate();
  require(beta_star > 0.0, "beta* must be positive");
  const PolyBasis basis(p, spec.dim);
  const auto& alphas = basis.multi_indices();
  const auto g = profile_coefficients(spec.name);
  const auto g2 = square_poly(g);
  const double c = spec.normalizer();
  const double d = spec.dim;
  const double q = spec.norm_q;

  // int G(||v||) m(v) dv = (d + k) * [int_B m] * int_0^1 G(r) r^{d-1+k} dr
  // for m homogeneous of degree k.
  auto radial_integral = [&](const std::vector<double>& coef, const std::vector<int>& alpha) {
    int k = 0;
    for (int a : alpha) k += a;
    const double ball = ball_monomial(alpha, q);
    if (ball == 0.0) return 0.0;
    return (d + k) * ball * radial_moment(coef, d - 1.0 + k);
  };

  KernelMoments m;
  m.r2 = kernel_r2(spec);
  const Index pb = basis.size();
  m.u.resize(pb);
  m.s1.resize(pb, pb);
  m.s2.resize(pb, pb);
  std::vector<double> invfact(static_cast<std::size_t>(pb));
  for (Index a = 0; a < pb; ++a) {
    double f = 1.0;
    for (int ai : alphas[static_cast<std::size_t>(a)]) f *= factorial(ai);
    invfact[static_cast<std::size_t>(a)] = 1.0 / f;
  }
  for (Index a = 0; a < pb; ++a) {
    const auto& aa = alphas[static_cast<std::size_t>(a)];
    m.u(a) = c * invfact[static_cast<std::size_t>(a)] * radial_integral(g, aa);
    for (Index b = 0; b < pb; ++b) {
      std::vector<int> sum = aa;
      const auto& bb = alphas[static_cast<std::size_t>(b)];
      for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += bb[j];
      const double w = invfact[static_cast<std::size_t>(a)] * invfact[static_cast<std::size_t>(b)];
      m.s1(a, b) = c * w * radial_integral(g, sum);
      m.s2(a, b) = c * c * w * radial_integral(g2, sum);
    }
  }

  // mu_beta = sum_j int K |v_j|^beta; each term is homogeneous of degree beta.
  std::vector<double> expo(static_cast<std::size_t>(spec.dim), 0.0);
  expo[0] = beta_star;
  const double one_coord = (d + beta_star) * ball_abs_moment(expo, q) *
                           radial_moment(g, d - 1.0 + beta_star);
  m.mu_beta = c * d * one_coord;
  return m;
}

double lambda0(const KernelSpec& spec) {
  const OutriggerKernel unit(2.0, spec.dim, spec.norm_q);
  return std::pow(1.0 + unit.v_dq() / kernel_r2(spec), 1.0 / spec.dim);
}

}  // namespace outrigger
