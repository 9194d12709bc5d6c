#include "outrigger/score.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "outrigger/error.hpp"
#include "outrigger/kernel.hpp"
#include "outrigger/lp.hpp"

namespace outrigger {

namespace {

constexpr double kVarianceFloor = 1e-24;

std::vector<double> sorted_copy(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v;
}

// Type-7 sample quantile of sorted data.
double quantile_sorted(const std::vector<double>& s, double p) {
  const double pos = p * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return s[lo] + frac * (s[hi] - s[lo]);
}

struct EvaluatedBasis {
  Matrix B;  // m x K values
  Matrix D;  // m x K slopes
};

EvaluatedBasis evaluate(const NaturalSplineBasis& basis, const std::vector<double>& residuals) {
  const Index m = static_cast<Index>(residuals.size());
  const Index K = basis.size();
  // Row-major scratch so eval writes contiguous rows.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> B(m, K), D(m, K);
  for (Index i = 0; i < m; ++i)
    basis.eval(residuals[static_cast<std::size_t>(i)], B.row(i).data(), D.row(i).data());
  return {B, D};
}

NaturalSpline make_spline(const NaturalSplineBasis& basis, const Vector& g) {
  return {basis.knots(), g, basis.second_derivatives(g)};
}

ScoreModel model_from(const NaturalSplineBasis& basis, const Vector& g, double eta, Index m) {
  ScoreModel model;
  model.spline = make_spline(basis, g);
  model.a0 = basis.knots().front();
  model.b0 = basis.knots().back();
  model.eta = eta;
  model.n_residuals = m;
  return model;
}

}  // namespace

CvRule parse_cv_rule(std::string_view name) {
  if (name == "min") return CvRule::Min;
  if (name == "one_se") return CvRule::OneSe;
  fail(ErrorCode::UnknownName, "unknown cv rule '" + std::string(name) + "'");
}

std::string to_string(CvRule rule) { return rule == CvRule::Min ? "min" : "one_se"; }

std::vector<double> ScoreFitConfig::default_eta_grid() {
  std::vector<double> grid(25);
  for (int k = 0; k < 25; ++k) grid[static_cast<std::size_t>(k)] = std::pow(10.0, -6.0 + 8.0 * k / 24.0);
  return grid;
}

void ScoreFitConfig::validate() const {
  require(!eta_grid.empty(), "score penalty grid is empty");
  for (double e : eta_grid) require(e > 0.0 && std::isfinite(e), "score penalties must be positive");
  require(cv_folds >= 2, "score cross-validation needs at least two folds");
  require(max_interior_knots >= 1, "score spline needs at least one interior knot");
  require(min_samples >= 3, "score fitting needs min_samples >= 3");
}

double eval_score(const ScoreModel& model, double e) {
  require(std::isfinite(e), "score evaluated at a non-finite residual");
  return model(e);
}

double eval_score_deriv(const ScoreModel& model, double e) {
  require(std::isfinite(e), "score derivative evaluated at a non-finite residual");
  return model.deriv(e);
}

ScoreModel gaussian_fallback(const std::vector<double>& residuals) {
  require(!residuals.empty(), "no residuals for the Gaussian score fallback",
          ErrorCode::TooFewResiduals);
  const double n = static_cast<double>(residuals.size());
  const double mean = std::accumulate(residuals.begin(), residuals.end(), 0.0) / n;
  double var = 0.0;
  for (double r : residuals) var += (r - mean) * (r - mean);
  var /= n;
  ScoreModel model;
  model.fallback = true;
  model.mean = mean;
  model.variance = std::max(var, kVarianceFloor);
  model.n_residuals = static_cast<Index>(residuals.size());
  const auto [lo, hi] = std::minmax_element(residuals.begin(), residuals.end());
  model.a0 = *lo;
  model.b0 = *hi;
  return model;
}

std::vector<double> score_knots(std::vector<double> residuals, int max_interior_knots) {
  require(residuals.size() >= 2, "score spline needs at least two residuals",
          ErrorCode::TooFewResiduals);
  std::sort(residuals.begin(), residuals.end());
  const double a0 = residuals.front();
  const double b0 = residuals.back();
  require(b0 > a0, "score spline needs distinct residuals", ErrorCode::TooFewResiduals);
  const int m = static_cast<int>(residuals.size());
  // Roughly m^(1/3) knots; denser placement lets small penalties carve
  // steep slopes between neighbouring residuals that CV rarely samples.
  const int J = std::min(max_interior_knots, std::max(3, static_cast<int>(std::cbrt(static_cast<double>(m)))));
  const double min_gap = 1e-6 * (b0 - a0);

  std::vector<double> knots{a0};
  for (int j = 1; j <= J; ++j) {
    const double t = quantile_sorted(residuals, static_cast<double>(j) / (J + 1));
    if (t - knots.back() >= min_gap && b0 - t >= min_gap) knots.push_back(t);
  }
  knots.push_back(b0);
  return knots;
}

ScoreMatchingSystem build_score_system(const std::vector<double>& residuals,
                                       int max_interior_knots) {
  ScoreMatchingSystem sys{NaturalSplineBasis(score_knots(residuals, max_interior_knots)), {}, {}};
  const auto ev = evaluate(sys.basis, residuals);
  const double m = static_cast<double>(residuals.size());
  sys.M = (ev.B.transpose() * ev.B) / m;
  sys.dbar = ev.D.colwise().sum().transpose() / m;
  return sys;
}

double stationarity_residual(const ScoreMatchingSystem& sys, const Vector& g, double eta) {
  return ((sys.M + eta * sys.basis.penalty()) * g + sys.dbar).lpNorm<Eigen::Infinity>();
}

ScoreModel fit_score_spline(const std::vector<double>& residuals, double eta,
                            const ScoreFitConfig& config) {
  require(eta > 0.0, "score penalty eta must be positive");
  if (static_cast<int>(residuals.size()) < config.min_samples)
    fail(ErrorCode::TooFewResiduals, "score spline needs at least " +
                                         std::to_string(config.min_samples) + " residuals, got " +
                                         std::to_string(residuals.size()));
  const auto sys = build_score_system(residuals, config.max_interior_knots);
  const Matrix A = sys.M + eta * sys.basis.penalty();
  Vector g;
  const Eigen::LLT<Matrix> llt(A);
  if (llt.info() == Eigen::Success) {
    g = llt.solve(-sys.dbar);
  } else {
    solve_spd_with_jitter(A, -sys.dbar, g, ErrorCode::SingularPenalty, "score-matching system");
  }
  if (!g.allFinite()) fail(ErrorCode::SingularPenalty, "score-matching system has no finite solution");
  return model_from(sys.basis, g, eta, static_cast<Index>(residuals.size()));
}

std::vector<std::vector<double>> cv_fold_losses(const std::vector<double>& residuals,
                                                const ScoreFitConfig& config) {
  config.validate();
  const std::vector<double> grid = sorted_copy(config.eta_grid);
  const Index m = static_cast<Index>(residuals.size());
  if (m < config.cv_folds || m < config.min_samples)
    fail(ErrorCode::TooFewResiduals, "not enough residuals for score cross-validation");

  std::vector<Index> perm(static_cast<std::size_t>(m));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(config.cv_seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  const int F = config.cv_folds;
  std::vector<int> fold(static_cast<std::size_t>(m));
  for (Index pos = 0; pos < m; ++pos)
    fold[static_cast<std::size_t>(perm[static_cast<std::size_t>(pos)])] = static_cast<int>(pos % F);

  // Knots come from the training part only; placing them at quantiles of
  // the held-out residuals too lets small penalties overfit undetected.
  std::vector<std::vector<double>> loss(grid.size(), std::vector<double>(static_cast<std::size_t>(F), 0.0));
  std::vector<double> train, held;
  for (int f = 0; f < F; ++f) {
    train.clear();
    held.clear();
    for (Index i = 0; i < m; ++i)
      (fold[static_cast<std::size_t>(i)] == f ? held : train).push_back(residuals[static_cast<std::size_t>(i)]);
    const auto [lo, hi] = std::minmax_element(train.begin(), train.end());
    if (!(*hi > *lo)) {
      for (auto& row : loss) std::fill(row.begin(), row.end(), std::numeric_limits<double>::infinity());
      break;
    }
    const NaturalSplineBasis basis(score_knots(train, config.max_interior_knots));
    const auto tr = evaluate(basis, train);
    const auto ho = evaluate(basis, held);
    const double n_tr = static_cast<double>(train.size());
    const Matrix M = (tr.B.transpose() * tr.B) / n_tr;
    const Vector d = tr.D.colwise().sum().transpose() / n_tr;
    const Matrix& omega = basis.penalty();
    Eigen::LLT<Matrix> llt(basis.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
      llt.compute(M + grid[g] * omega);
      auto& cell = loss[g][static_cast<std::size_t>(f)];
      if (llt.info() != Eigen::Success) {
        cell = std::numeric_limits<double>::infinity();
        continue;
      }
      const Vector coef = llt.solve(-d);
      const Vector rho = ho.B * coef;
      const Vector drho = ho.D * coef;
      cell = (rho.squaredNorm() + 2.0 * drho.sum()) / static_cast<double>(held.size());
    }
  }
  return loss;
}

std::vector<double> cv_losses(const std::vector<double>& residuals, const ScoreFitConfig& config) {
  const auto folds = cv_fold_losses(residuals, config);
  std::vector<double> mean;
  mean.reserve(folds.size());
  for (const auto& row : folds) mean.push_back(std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size()));
  return mean;
}

double cv_select_eta(const std::vector<double>& residuals, const ScoreFitConfig& config) {
  config.validate();
  const std::vector<double> grid = sorted_copy(config.eta_grid);
  if (grid.size() == 1) return grid.front();
  const auto folds = cv_fold_losses(residuals, config);
  std::vector<double> loss;
  for (const auto& row : folds) loss.push_back(std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size()));
  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g)
    if (loss[g] < loss[best]) best = g;
  if (config.cv_rule == CvRule::Min || !std::isfinite(loss[best])) return grid[best];

  // Held-out losses of rough fits are right-skewed, so the raw minimum is
  // often a lucky small eta; accept the smoothest fit within one standard
  // error instead.
  const auto& row = folds[best];
  const double F = static_cast<double>(row.size());
  double ss = 0.0;
  for (double v : row) ss += (v - loss[best]) * (v - loss[best]);
  const double se = std::sqrt(ss / (F - 1.0) / F);
  for (std::size_t g = grid.size(); g-- > best;)
    if (loss[g] <= loss[best] + se) return grid[g];
  return grid[best];
}

ScoreModel fit_local_score(const std::vector<double>& local, const std::vector<double>& all,
                           const ScoreFitConfig& config) {
  if (static_cast<int>(local.size()) < config.min_samples) {
    bool usable = local.size() >= 2;
    if (usable) {
      const auto [lo, hi] = std::minmax_element(local.begin(), local.end());
      usable = *hi > *lo;
    }
    return gaussian_fallback(usable ? local : all);
  }
  const double eta = cv_select_eta(local, config);
  ScoreModel model = fit_score_spline(local, eta, config);
  if (model.spline.min_slope() >= 0.0) return gaussian_fallback(local);
  return model;
}

ScoreModel fit_conditional_score(const Dataset& data, const Vector& pilot_residuals,
                                 const Vector& x0, double t, const ScoreFitConfig& config,
                                 double norm_q) {
  config.validate();
  require(t > 0.0, "localisation radius must be positive");
  require(pilot_residuals.size() == data.size(), "one pilot residual per observation is required",
          ErrorCode::DimensionMismatch);
  require(x0.size() == data.dim(), "x0 dimension does not match the data",
          ErrorCode::DimensionMismatch);
  require(data.size() > 0, "no residuals to fit a score", ErrorCode::TooFewResiduals);

  std::vector<double> local;
  std::vector<double> all(pilot_residuals.data(), pilot_residuals.data() + pilot_residuals.size());
  Vector u(data.dim());
  for (Index i = 0; i < data.size(); ++i) {
    u = data.X.row(i).transpose() - x0;
    if (lq_norm(u, norm_q) <= t) local.push_back(pilot_residuals(i));
  }
  ScoreModel model = fit_local_score(local, all, config);
  model.localization_radius = t;
  return model;
}

void write_score_curve_csv(const ScoreModel& model, std::ostream& os, int points, double pad) {
  require(points >= 2, "score curve needs at least two points");
  const double lo = model.a0 - pad;
  const double hi = model.b0 + pad;
  os << "e,rho,rho_prime\n";
  char buf[128];
  for (int k = 0; k < points; ++k) {
    const double e = lo + (hi - lo) * k / (points - 1);
    std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g\n", e, model(e), model.deriv(e));
    os << buf;
  }
}

}  // namespace outrigger
