#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "outrigger/kernel.hpp"
#include "outrigger/types.hpp"

namespace outrigger {

enum class DgpName {
  Gauss,        // N(0, 1)
  ScaleMix,     // 1/2 N(0, 1) + 1/2 N(0, 16)
  LocMix,       // 1/2 N(1, 1/10) + 1/2 N(-1, 1/10)
  SmoothExp,    // W - 1 + (sqrt(3)/10) Z, W ~ Exp(1)
  CubedGauss,   // Z^3
  DepScaleMix,  // logistic(x) N(0, 1) + (1 - logistic(x)) N(0, 16)
  ExpT3,        // 4/(4+x^2) (W - 1) + (1+x^2)/(4+x^2) T, T ~ t_3
  PowerGauss,   // |Z|^{1/2 + x^2} sgn(Z)
};

DgpName parse_dgp_name(std::string_view name);
std::string to_string(DgpName name);
std::vector<DgpName> all_dgps();

/// Y = 4 cos(pi X) + eps. The first five laws draw X ~ Unif[-2, 2] with
/// eps independent of X; the last three draw X ~ N(0, 1) and let the error
/// law depend on X.
struct DgpSpec {
  DgpName name = DgpName::Gauss;

  DgpSpec() = default;
  explicit DgpSpec(DgpName n) : name(n) {}
  explicit DgpSpec(std::string_view n) : name(parse_dgp_name(n)) {}

  bool errors_depend_on_x() const;
  bool finite_fisher_information() const;
  double regression(double x) const;
  /// Closed-form Var(eps | X = x).
  double conditional_variance(double x) const;
};

/// n i.i.d. pairs; deterministic in `seed`.
Dataset sample(const DgpSpec& spec, Index n, std::uint64_t seed);

struct ScoreValue {
  double rho;
  double rho_prime;
};

/// Conditional error density p(e | x).
double error_density(const DgpSpec& spec, double e, double x);

/// Conditional score d/de log p(e | x) and its derivative. Throws at the
/// singular points of cubed_gauss (e = 0) and power_gauss (|e| < 1e-6).
ScoreValue oracle_score(const DgpSpec& spec, double e, double x);

/// Breakpoints worth splitting quadrature at, for the error law at x.
std::vector<double> quadrature_breaks(const DgpSpec& spec, double x);

struct PopulationQuantities {
  double x0 = 0.0;
  double sigma2 = 0.0;
  double fisher_info = 0.0;  // +inf when the law has infinite information
  bool finite_info = true;
  double r2_kernel = 0.0;
  int dim = 1;
  double norm_q = 2.0;
  double ratio_exponent = 2.0 / 3.0;

  /// V(lambda) = 1/i + (sigma^2 - 1/i) R2(kappa_lambda)/R2(K).
  double v_lambda(double lambda) const;
  /// (V(lambda)/sigma^2)^{ratio_exponent}; 2/3 for local constant, d = 1.
  double asymptotic_ratio(double lambda) const;
  /// lambda -> infinity limit (1/(i sigma^2))^{ratio_exponent}.
  double limit_ratio() const;
};

/// sigma^2 and i by adaptive quadrature of e^2 p and rho^2 p.
PopulationQuantities population_quantities(const DgpSpec& spec, double x0,
                                           const KernelSpec& K = {});

struct RatioRow {
  double lambda;
  double v_lambda;
  double ratio;
};

/// Tabulates (V(lambda)/sigma^2)^{2/3} over the grid; every grid point must
/// exceed lambda_0(K).
std::vector<RatioRow> theoretical_ratio_curve(const DgpSpec& spec, double x0,
                                              const std::vector<double>& lambda_grid,
                                              const KernelSpec& K = {});

void write_ratio_csv(const std::vector<RatioRow>& rows, std::ostream& os);
void write_population_csv(const DgpSpec& spec, const PopulationQuantities& pq, std::ostream& os);

}  // namespace outrigger
