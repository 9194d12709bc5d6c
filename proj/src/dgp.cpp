#include "outrigger/dgp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>

#include <boost/math/constants/constants.hpp>

#include "outrigger/error.hpp"
#include "outrigger/quadrature.hpp"
#include "outrigger/rng.hpp"

namespace outrigger {

namespace {

constexpr double kPi = boost::math::constants::pi<double>();
const double kSqrt2Pi = std::sqrt(2.0 * kPi);

// smooth_exp: W - 1 + s Z with s = sqrt(3)/10.
const double kSmoothS = std::sqrt(3.0) / 10.0;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double power_gamma(double x) { return 0.5 + x * x; }

struct Component {
  double weight, mean, var;
};

// Mixture components for the Gaussian-mixture laws at covariate x.
int mixture(DgpName name, double x, std::array<Component, 2>& out) {
  switch (name) {
    case DgpName::ScaleMix:
      out = {{{0.5, 0.0, 1.0}, {0.5, 0.0, 16.0}}};
      return 2;
    case DgpName::LocMix:
      out = {{{0.5, 1.0, 0.1}, {0.5, -1.0, 0.1}}};
      return 2;
    case DgpName::DepScaleMix: {
      const double L = logistic(x);
      out = {{{L, 0.0, 1.0}, {1.0 - L, 0.0, 16.0}}};
      return 2;
    }
    default:
      out = {{{1.0, 0.0, 1.0}, {0.0, 0.0, 1.0}}};
      return 1;
  }
}

ScoreValue mixture_score(DgpName name, double e, double x, double* density) {
  std::array<Component, 2> comp;
  const int k = mixture(name, x, comp);
  std::array<double, 2> logw{};
  double mx = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < k; ++j) {
    const auto& c = comp[static_cast<std::size_t>(j)];
    const double z = e - c.mean;
    logw[static_cast<std::size_t>(j)] =
        c.weight > 0.0 ? std::log(c.weight) - 0.5 * std::log(2.0 * kPi * c.var) - z * z / (2.0 * c.var)
                       : -std::numeric_limits<double>::infinity();
    mx = std::max(mx, logw[static_cast<std::size_t>(j)]);
  }
  double total = 0.0;
  for (int j = 0; j < k; ++j) total += std::exp(logw[static_cast<std::size_t>(j)] - mx);
  if (density) *density = std::exp(mx) * total;
  double rho = 0.0, second = 0.0;
  for (int j = 0; j < k; ++j) {
    const auto& c = comp[static_cast<std::size_t>(j)];
    const double r = std::exp(logw[static_cast<std::size_t>(j)] - mx) / total;
    const double rj = -(e - c.mean) / c.var;
    rho += r * rj;
    second += r * (-1.0 / c.var + rj * rj);
  }
  return {rho, second - rho * rho};
}

// Mills-type ratio phi(z)/Phi(z), stable far in the left tail.
double inv_mills(double z) {
  if (z <= -30.0) {
    const double z2 = z * z;
    return -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2) + 105.0 / (z2 * z2 * z2 * z2));
  }
  const double phi = std::exp(-0.5 * z * z) / kSqrt2Pi;
  const double Phi = 0.5 * std::erfc(-z / std::sqrt(2.0));
  return phi / Phi;
}

// ---------------------------------------------------------------------------
// exp_t3: a (W - 1) + b T.

struct ExpT3 {
  double a, b;
  explicit ExpT3(double x) : a(4.0 / (4.0 + x * x)), b((1.0 + x * x) / (4.0 + x * x)) {}
};

const double kT3C = 2.0 / (kPi * std::sqrt(3.0));

// p, p', p'' at e via the mixing integral over w.
std::array<double, 3> exp_t3_derivs(double e, double x) {
  const ExpT3 law(x);
  const double a = law.a, b = law.b;
  const double wstar = 1.0 + e / a;
  const double s = std::sqrt(3.0) * b / a;  // distance from peak to the t3 poles
  const double cap = 200.0;
  const double w_end = std::min(std::max(wstar, 0.0), cap) + 45.0;

  std::vector<double> breaks{0.0, w_end};
  if (wstar < cap) {
    for (int k = -2; k <= 14; ++k) {
      const double d = s * std::ldexp(1.0, k);
      for (double w : {wstar - d, wstar + d})
        if (w > 0.0 && w < w_end) breaks.push_back(w);
    }
    if (wstar > 0.0 && wstar < w_end) breaks.push_back(wstar);
  }
  std::sort(breaks.begin(), breaks.end());
  std::vector<double> fine;
  fine.reserve(breaks.size() * 2);
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double lo = breaks[k], hi = breaks[k + 1];
    const int pieces = std::max(1, static_cast<int>(std::ceil((hi - lo) / 8.0)));
    for (int j = 0; j < pieces; ++j) fine.push_back(lo + (hi - lo) * j / pieces);
  }
  fine.push_back(breaks.back());

  static const quad::Rule& rule = quad::gauss_legendre(20);
  const double ib = 1.0 / b;
  std::array<double, 3> acc{0.0, 0.0, 0.0};
  for (std::size_t k = 0; k + 1 < fine.size(); ++k) {
    const double lo = fine[k], hi = fine[k + 1];
    if (!(hi > lo)) continue;
    const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    std::array<double, 3> seg{0.0, 0.0, 0.0};
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
      const double w = mid + half * rule.nodes[j];
      const double u = (e - a * (w - 1.0)) * ib;
      const double base = 1.0 / (1.0 + u * u / 3.0);
      const double b2 = base * base;
      const double ew = std::exp(-w) * rule.weights[j];
      seg[0] += ew * b2;
      seg[1] += ew * (-(4.0 * u / 3.0) * b2 * base);
      seg[2] += ew * (-(4.0 / 3.0) * b2 * b2 * (1.0 - 5.0 * u * u / 3.0));
    }
    for (int m = 0; m < 3; ++m) acc[static_cast<std::size_t>(m)] += half * seg[static_cast<std::size_t>(m)];
  }
  return {kT3C * acc[0] * ib, kT3C * acc[1] * ib * ib, kT3C * acc[2] * ib * ib * ib};
}

double power_gauss_density(double e, double x) {
  const double g = power_gamma(x);
  const double ae = std::abs(e);
  if (ae == 0.0) return g < 1.0 ? 0.0 : (g == 1.0 ? 1.0 / kSqrt2Pi : std::numeric_limits<double>::infinity());
  const double z = std::pow(ae, 1.0 / g);
  return std::exp(-0.5 * z * z) / kSqrt2Pi * z / (g * ae);
}

}  // namespace

// ---------------------------------------------------------------------------

DgpName parse_dgp_name(std::string_view name) {
  for (DgpName d : all_dgps())
    if (to_string(d) == name) return d;
  fail(ErrorCode::UnknownName, "unknown dgp '" + std::string(name) + "'");
}

std::string to_string(DgpName name) {
  switch (name) {
    case DgpName::Gauss: return "gauss";
    case DgpName::ScaleMix: return "scale_mix";
    case DgpName::LocMix: return "loc_mix";
    case DgpName::SmoothExp: return "smooth_exp";
    case DgpName::CubedGauss: return "cubed_gauss";
    case DgpName::DepScaleMix: return "dep_scale_mix";
    case DgpName::ExpT3: return "exp_t3";
    case DgpName::PowerGauss: return "power_gauss";
  }
  return "?";
}

std::vector<DgpName> all_dgps() {
  return {DgpName::Gauss,      DgpName::ScaleMix,    DgpName::LocMix, DgpName::SmoothExp,
          DgpName::CubedGauss, DgpName::DepScaleMix, DgpName::ExpT3,  DgpName::PowerGauss};
}

bool DgpSpec::errors_depend_on_x() const {
  return name == DgpName::DepScaleMix || name == DgpName::ExpT3 || name == DgpName::PowerGauss;
}

// power_gauss has finite information only on the null set x^2 = 1/2.
bool DgpSpec::finite_fisher_information() const {
  return name != DgpName::CubedGauss && name != DgpName::PowerGauss;
}

double DgpSpec::regression(double x) const { return 4.0 * std::cos(kPi * x); }

double DgpSpec::conditional_variance(double x) const {
  switch (name) {
    case DgpName::Gauss: return 1.0;
    case DgpName::ScaleMix: return 8.5;
    case DgpName::LocMix: return 1.1;
    case DgpName::SmoothExp: return 1.0 + kSmoothS * kSmoothS;
    case DgpName::CubedGauss: return 15.0;
    case DgpName::DepScaleMix: {
      const double L = logistic(x);
      return L + 16.0 * (1.0 - L);
    }
    case DgpName::ExpT3: {
      const ExpT3 law(x);
      return law.a * law.a + 3.0 * law.b * law.b;
    }
    case DgpName::PowerGauss: {
      const double g = power_gamma(x);
      return std::pow(2.0, g) * std::tgamma(g + 0.5) / std::sqrt(kPi);
    }
  }
  return 0.0;
}

Dataset sample(const DgpSpec& spec, Index n, std::uint64_t seed) {
  require(n >= 0, "sample size must be non-negative");
  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  std::student_t_distribution<double> t3(3.0);

  Dataset data;
  data.X.resize(n, 1);
  data.Y.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double x = spec.errors_depend_on_x() ? normal(rng) : -2.0 + 4.0 * unif(rng);
    double e = 0.0;
    switch (spec.name) {
      case DgpName::Gauss:
        e = normal(rng);
        break;
      case DgpName::ScaleMix: {
        const bool wide = unif(rng) < 0.5;
        e = (wide ? 4.0 : 1.0) * normal(rng);
        break;
      }
      case DgpName::LocMix: {
        const double m = unif(rng) < 0.5 ? 1.0 : -1.0;
        e = m + std::sqrt(0.1) * normal(rng);
        break;
      }
      case DgpName::SmoothExp:
        e = expo(rng) - 1.0;
        e += kSmoothS * normal(rng);
        break;
      case DgpName::CubedGauss: {
        const double z = normal(rng);
        e = z * z * z;
        break;
      }
      case DgpName::DepScaleMix: {
        const bool narrow = unif(rng) < logistic(x);
        e = (narrow ? 1.0 : 4.0) * normal(rng);
        break;
      }
      case DgpName::ExpT3: {
        const ExpT3 law(x);
        e = law.a * (expo(rng) - 1.0);
        e += law.b * t3(rng);
        break;
      }
      case DgpName::PowerGauss: {
        const double z = normal(rng);
        e = std::copysign(std::pow(std::abs(z), power_gamma(x)), z);
        break;
      }
    }
    data.X(i, 0) = x;
    data.Y(i) = spec.regression(x) + e;
  }
  return data;
}

double error_density(const DgpSpec& spec, double e, double x) {
  switch (spec.name) {
    case DgpName::Gauss:
      return std::exp(-0.5 * e * e) / kSqrt2Pi;
    case DgpName::ScaleMix:
    case DgpName::LocMix:
    case DgpName::DepScaleMix: {
      double p = 0.0;
      mixture_score(spec.name, e, x, &p);
      return p;
    }
    case DgpName::SmoothExp: {
      const double s2 = kSmoothS * kSmoothS;
      const double y = e + 1.0;
      const double z = (y - s2) / kSmoothS;
      // log Phi(z) through the Mills ratio once erfc underflows.
      const double log_Phi = z <= -30.0 ? -0.5 * z * z - std::log(kSqrt2Pi) - std::log(inv_mills(z))
                                        : std::log(0.5 * std::erfc(-z / std::sqrt(2.0)));
      return std::exp(0.5 * s2 - y + log_Phi);
    }
    case DgpName::CubedGauss: {
      if (e == 0.0) return std::numeric_limits<double>::infinity();
      const double c = std::cbrt(e);
      return std::exp(-0.5 * c * c) / kSqrt2Pi / (3.0 * c * c);
    }
    case DgpName::ExpT3:
      return exp_t3_derivs(e, x)[0];
    case DgpName::PowerGauss:
      return power_gauss_density(e, x);
  }
  return 0.0;
}

ScoreValue oracle_score(const DgpSpec& spec, double e, double x) {
  require(std::isfinite(e) && std::isfinite(x), "oracle score needs finite arguments");
  switch (spec.name) {
    case DgpName::Gauss:
      return {-e, -1.0};
    case DgpName::ScaleMix:
    case DgpName::LocMix:
    case DgpName::DepScaleMix:
      return mixture_score(spec.name, e, x, nullptr);
    case DgpName::SmoothExp: {
      const double s = kSmoothS;
      const double z = (e + 1.0 - s * s) / s;
      const double m = inv_mills(z);
      return {-1.0 + m / s, -(z * m + m * m) / (s * s)};
    }
    case DgpName::CubedGauss: {
      require(e != 0.0, "cubed_gauss score is singular at e = 0");
      const double c = std::cbrt(e);
      const double c2 = c * c;
      return {-1.0 / (3.0 * c) - 2.0 / (3.0 * e), 1.0 / (9.0 * c2 * c2) + 2.0 / (3.0 * e * e)};
    }
    case DgpName::ExpT3: {
      const auto d = exp_t3_derivs(e, x);
      if (!(d[0] > 0.0))
        fail(ErrorCode::QuadratureFailure, "exp_t3 density underflowed at e = " + std::to_string(e));
      const double rho = d[1] / d[0];
      return {rho, d[2] / d[0] - rho * rho};
    }
    case DgpName::PowerGauss: {
      require(std::abs(e) >= 1e-6, "power_gauss score is not evaluated within 1e-6 of zero");
      const double ig = 1.0 / power_gamma(x);
      const double ae = std::abs(e);
      const double rho = -ig * std::pow(ae, 2.0 * ig - 1.0) * std::copysign(1.0, e) + (ig - 1.0) / e;
      const double rp = -ig * (2.0 * ig - 1.0) * std::pow(ae, 2.0 * ig - 2.0) - (ig - 1.0) / (e * e);
      return {rho, rp};
    }
  }
  return {0.0, 0.0};
}

std::vector<double> quadrature_breaks(const DgpSpec& spec, double x) {
  switch (spec.name) {
    case DgpName::Gauss: return {-4.0, 0.0, 4.0};
    case DgpName::ScaleMix:
    case DgpName::DepScaleMix: return {-16.0, -4.0, 0.0, 4.0, 16.0};
    case DgpName::LocMix: return {-2.0, -1.0, 0.0, 1.0, 2.0};
    case DgpName::SmoothExp: return {-1.5, -1.0, 0.0, 1.0, 4.0, 12.0};
    case DgpName::CubedGauss: return {-27.0, -1.0, 0.0, 1.0, 27.0};
    case DgpName::ExpT3: {
      const ExpT3 law(x);
      return {-law.a - 4.0 * law.b, -law.a, 0.0, 4.0 * law.a, 12.0 * law.a};
    }
    case DgpName::PowerGauss: return {-4.0, -1.0, 0.0, 1.0, 4.0};
  }
  return {0.0};
}

// ---------------------------------------------------------------------------

double PopulationQuantities::v_lambda(double lambda) const {
  if (!finite_info)
    fail(ErrorCode::InfiniteFisherInformation,
         "infinite Fisher information: V(lambda) is not defined for this law");
  const double r2k = OutriggerKernel(lambda, dim, norm_q).r2();
  const double inv_i = 1.0 / fisher_info;
  return inv_i + (sigma2 - inv_i) * r2k / r2_kernel;
}

double PopulationQuantities::asymptotic_ratio(double lambda) const {
  return std::pow(v_lambda(lambda) / sigma2, ratio_exponent);
}

double PopulationQuantities::limit_ratio() const {
  if (!finite_info)
    fail(ErrorCode::InfiniteFisherInformation, "infinite Fisher information: no limiting ratio");
  return std::pow(1.0 / (fisher_info * sigma2), ratio_exponent);
}

PopulationQuantities population_quantities(const DgpSpec& spec, double x0, const KernelSpec& K) {
  K.validate();
  require(std::isfinite(x0), "x0 must be finite");
  if (!spec.errors_depend_on_x())
    require(x0 >= -2.0 && x0 <= 2.0, "x0 lies outside the covariate support [-2, 2]");

  PopulationQuantities pq;
  pq.x0 = x0;
  pq.r2_kernel = kernel_r2(K);
  pq.dim = K.dim;
  pq.norm_q = K.norm_q;
  const auto breaks = quadrature_breaks(spec, x0);
  pq.sigma2 = quad::over_real_line(
      [&](double e) { return e * e * error_density(spec, e, x0); }, breaks, 1e-11);
  pq.finite_info = spec.finite_fisher_information();
  if (pq.finite_info) {
    pq.fisher_info = quad::over_real_line(
        [&](double e) {
          const double p = error_density(spec, e, x0);
          if (!(p > 0.0)) return 0.0;
          const double r = oracle_score(spec, e, x0).rho;
          return r * r * p;
        },
        breaks, 1e-11);
  } else {
    pq.fisher_info = std::numeric_limits<double>::infinity();
  }
  return pq;
}

std::vector<RatioRow> theoretical_ratio_curve(const DgpSpec& spec, double x0,
                                              const std::vector<double>& lambda_grid,
                                              const KernelSpec& K) {
  require(!lambda_grid.empty(), "lambda grid is empty");
  if (!spec.finite_fisher_information())
    fail(ErrorCode::InfiniteFisherInformation,
         to_string(spec.name) + " has infinite Fisher information; the ratio curve is undefined");
  const double l0 = lambda0(K);
  for (double l : lambda_grid)
    require(std::isfinite(l) && l >= l0 * (1.0 - 1e-12),
            "lambda grid point " + std::to_string(l) + " is below lambda0 = " + std::to_string(l0));
  const auto pq = population_quantities(spec, x0, K);
  std::vector<RatioRow> rows;
  rows.reserve(lambda_grid.size());
  for (double l : lambda_grid) {
    // lambda0 itself is the variance-neutral point; snap rounding at the boundary.
    const double v = std::abs(l - l0) <= 1e-12 * l0 ? pq.sigma2 : pq.v_lambda(l);
    rows.push_back({l, v, std::pow(v / pq.sigma2, pq.ratio_exponent)});
  }
  return rows;
}

void write_ratio_csv(const std::vector<RatioRow>& rows, std::ostream& os) {
  os << "lambda,v_lambda,ratio\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g\n", r.lambda, r.v_lambda, r.ratio);
    os << buf;
  }
}

void write_population_csv(const DgpSpec& spec, const PopulationQuantities& pq, std::ostream& os) {
  os << "dgp,x0,sigma2,fisher_info,finite_info,r2_kernel\n";
  char info[64] = "inf";
  if (pq.finite_info) std::snprintf(info, sizeof info, "%.12g", pq.fisher_info);
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%.12g,%.12g,%s,%d,%.12g\n", to_string(spec.name).c_str(), pq.x0,
                pq.sigma2, info, pq.finite_info ? 1 : 0, pq.r2_kernel);
  os << buf;
}

}  // namespace outrigger
