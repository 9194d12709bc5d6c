#include "outrigger/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "outrigger/error.hpp"
#include "outrigger/lp.hpp"
#include "outrigger/rng.hpp"

namespace outrigger {

namespace {

constexpr double kVarianceClamp = 1e-12;

std::string fmt12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// Kernel weights around x0 for one bandwidth.
struct LocalWeights {
  const Dataset& data;
  Vector x0;
  double h;
  KernelSpec K;
  OutriggerKernel kappa;
  double inner_scale;  // c / h^d
  double outer_height; // kappa height / h^d
  mutable std::vector<double> u;

  LocalWeights(const Dataset& d, const Vector& x0_, double h_, const KernelSpec& K_,
               const OutriggerKernel& kap)
      : data(d), x0(x0_), h(h_), K(K_), kappa(kap),
        inner_scale(K_.normalizer() / std::pow(h_, K_.dim)),
        outer_height(kap.height() / std::pow(h_, K_.dim)),
        u(static_cast<std::size_t>(K_.dim)) {}

  // ||X_i - x0||_q / h
  double radius(Index i) const {
    for (int j = 0; j < K.dim; ++j) u[static_cast<std::size_t>(j)] = (data.X(i, j) - x0(j)) / h;
    return lq_norm(u.data(), K.dim, K.norm_q);
  }
  double inner(double r) const { return r <= 1.0 ? inner_scale * K.profile(r) : 0.0; }
  double outer(double r) const { return (r > 1.0 && r <= kappa.lambda) ? outer_height : 0.0; }
  // Q_h(X_i - x0); valid right after radius(i).
  void basis(const PolyBasis& B, double* out) const { B.eval(u.data(), out); }
};

void validate_inputs(const Dataset& data, const Vector& x0) {
  data.validate();
  require(x0.size() == data.dim(), "x0 dimension does not match the data",
          ErrorCode::DimensionMismatch);
  require(x0.allFinite(), "x0 must be finite");
}

void validate_folds(const std::vector<std::vector<Index>>& folds, Index n) {
  require(folds.size() >= 2, "cross-fitting needs at least two folds");
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  Index count = 0;
  for (const auto& f : folds) {
    for (Index i : f) {
      require(i >= 0 && i < n, "fold index out of range");
      require(!seen[static_cast<std::size_t>(i)], "folds overlap");
      seen[static_cast<std::size_t>(i)] = 1;
      ++count;
    }
  }
  require(count == n, "folds do not cover every observation");
}

// Lexicographic order on equal-length vectors.
bool lex_less(const Vector& a, const Vector& b) {
  for (Index j = 0; j < a.size(); ++j) {
    if (a(j) < b(j)) return true;
    if (a(j) > b(j)) return false;
  }
  return false;
}

ScoringProblem inner_problem(const Dataset& data, const Vector& x0, double h, int p,
                             const KernelSpec& K, std::vector<Index>& rows) {
  const NeighborIndex index(data.X);
  std::vector<Index> window;
  index.query(x0.data(), h, K.norm_q, window);
  const LocalWeights lw(data, x0, h, K, OutriggerKernel(2.0, K.dim, K.norm_q));
  const PolyBasis B(p, K.dim);

  ScoringProblem prob;
  prob.inv_n = 1.0 / static_cast<double>(data.size());
  prob.Q.resize(static_cast<Index>(window.size()), B.size());
  prob.w.resize(static_cast<Index>(window.size()));
  prob.y.resize(static_cast<Index>(window.size()));
  prob.offset = Vector::Zero(B.size());
  rows.clear();
  Vector q(B.size());
  for (Index i : window) {
    const double w = lw.inner(lw.radius(i));
    if (!(w > 0.0)) continue;
    lw.basis(B, q.data());
    const Index m = static_cast<Index>(rows.size());
    prob.Q.row(m) = q.transpose();
    prob.w(m) = w;
    prob.y(m) = data.Y(i);
    rows.push_back(i);
  }
  const Index m = static_cast<Index>(rows.size());
  prob.Q.conservativeResize(m, B.size());
  prob.w.conservativeResize(m);
  prob.y.conservativeResize(m);
  return prob;
}

}  // namespace

// ---------------------------------------------------------------------------

void OutriggerConfig::validate() const {
  K.validate();
  require(h > 0.0 && std::isfinite(h), "bandwidth h must be positive");
  require(p >= 0, "degree p must be non-negative");
  const double l0 = lambda0(K);
  if (!(lambda > l0) || !std::isfinite(lambda)) {
    std::string msg = "lambda = " + fmt12(lambda) + " must exceed lambda0(K) = " + fmt12(l0);
    if (K.name == KernelName::Epanechnikov && K.dim == 1) msg += " (11/6 for the Epanechnikov kernel)";
    fail(ErrorCode::InvalidArgument, msg);
  }
  require(n_folds >= 2, "cross-fitting needs at least two folds");
  require(max_iters >= 1, "max_iters must be at least 1");
  require(tol > 0.0, "tolerance must be positive");
  require(n_starts >= 0, "n_starts must be non-negative");
  if (localization) require(*localization > 0.0, "localisation radius t must be positive");
  score.validate();
}

std::vector<std::vector<Index>> partition_folds(Index n, int n_folds, std::uint64_t seed) {
  require(n_folds >= 1, "number of folds must be positive");
  require(n >= n_folds, "cannot split " + std::to_string(n) + " observations into " +
                            std::to_string(n_folds) + " folds");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(splitmix64(seed));
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<Index>> folds(static_cast<std::size_t>(n_folds));
  for (Index pos = 0; pos < n; ++pos)
    folds[static_cast<std::size_t>(pos % n_folds)].push_back(perm[static_cast<std::size_t>(pos)]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

Vector compute_mu_hat(const Dataset& data, const std::vector<Index>& idx, const Vector& x0,
                      double h, int p, const KernelSpec& K, const OutriggerKernel& kappa) {
  require(h > 0.0, "bandwidth must be positive");
  const LocalWeights lw(data, x0, h, K, kappa);
  const PolyBasis B(p, K.dim);
  Vector num = Vector::Zero(B.size());
  Vector q(B.size());
  double den = 0.0;
  for (Index i : idx) {
    const double r = lw.radius(i);
    const double w = lw.inner(r);
    if (w > 0.0) {
      lw.basis(B, q.data());
      num += w * q;
    }
    den += lw.outer(r);
  }
  if (!(den > 0.0)) fail(ErrorCode::EmptyAnnulus, "no observations in the outrigger annulus");
  return num / den;
}

double compute_c_hat(const Dataset& data, const std::vector<Index>& idx, const Vector& pilot,
                     const Vector& x0, double h, const OutriggerKernel& kappa) {
  require(pilot.size() == static_cast<Index>(idx.size()), "one pilot value per index is required",
          ErrorCode::DimensionMismatch);
  KernelSpec K;
  K.dim = kappa.dim;
  K.norm_q = kappa.norm_q;
  const LocalWeights lw(data, x0, h, K, kappa);
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const Index i = idx[j];
    const double w = lw.outer(lw.radius(i));
    if (!(w > 0.0)) continue;
    num += w * (data.Y(i) - pilot(static_cast<Index>(j)));
    den += w;
  }
  if (!(den > 0.0)) fail(ErrorCode::EmptyAnnulus, "no in-fold observations in the outrigger annulus");
  return num / den;
}

// ---------------------------------------------------------------------------

std::vector<FoldArtifacts> build_fold_artifacts(const Dataset& data, const Vector& x0,
                                                const OutriggerConfig& config,
                                                const std::vector<std::vector<Index>>& folds) {
  const Index n = data.size();
  validate_folds(folds, n);
  const double h = config.h;
  const double t = config.t();
  const OutriggerKernel kappa = config.kappa();
  const LocalWeights lw(data, x0, h, config.K, kappa);

  std::vector<int> fold_of(static_cast<std::size_t>(n), -1);
  for (std::size_t k = 0; k < folds.size(); ++k)
    for (Index i : folds[k]) fold_of[static_cast<std::size_t>(i)] = static_cast<int>(k);

  const NeighborIndex index(data.X);
  std::vector<Index> window, local;
  index.query(x0.data(), kappa.lambda * h, config.K.norm_q, window);
  index.query(x0.data(), t, config.K.norm_q, local);

  std::vector<FoldArtifacts> out(folds.size());
  for (std::size_t k = 0; k < folds.size(); ++k) {
    FoldArtifacts& fa = out[k];
    fa.k = static_cast<int>(k);
    fa.fold = folds[k];
    std::vector<Index> comp;
    comp.reserve(static_cast<std::size_t>(n) - folds[k].size());
    for (Index i = 0; i < n; ++i)
      if (fold_of[static_cast<std::size_t>(i)] != static_cast<int>(k)) comp.push_back(i);
    const Dataset dc = data.subset(comp);
    const LocalPolynomial pilot(dc, h, config.p, config.K);

    for (Index i : window) {
      if (fold_of[static_cast<std::size_t>(i)] != static_cast<int>(k)) continue;
      const double r = lw.radius(i);
      if (lw.inner(r) > 0.0) fa.inner.push_back(i);
      else if (lw.outer(r) > 0.0) fa.annulus.push_back(i);
    }

    // Score from complement residuals near x0, in covariate order.
    std::vector<double> res;
    for (Index i : local) {
      if (fold_of[static_cast<std::size_t>(i)] == static_cast<int>(k)) continue;
      res.push_back(data.Y(i) - pilot.fit(data.X.row(i).transpose().eval()).estimate);
    }
    std::vector<double> all;
    const bool need_all =
        static_cast<int>(res.size()) < config.score.min_samples || config.force_gaussian_score;
    if (need_all && res.size() < 2) {
      for (Index i : comp) all.push_back(data.Y(i) - pilot.fit(data.X.row(i).transpose().eval()).estimate);
    } else {
      all = res;
    }
    if (config.force_gaussian_score) {
      fa.score = gaussian_fallback(res.size() >= 2 ? res : all);
    } else {
      fa.score = fit_local_score(res, all, config.score);
    }
    fa.score.fold_id = fa.k;
    fa.score.localization_radius = t;
    fa.score_residuals = std::move(res);

    if (config.suppress_outrigger_term) {
      fa.mu_hat = Vector::Zero(PolyBasis(config.p, config.K.dim).size());
      fa.c_hat = 0.0;
      fa.pilot_annulus = Vector::Zero(static_cast<Index>(fa.annulus.size()));
      for (std::size_t j = 0; j < fa.annulus.size(); ++j)
        fa.pilot_annulus(static_cast<Index>(j)) =
            pilot.fit(data.X.row(fa.annulus[j]).transpose().eval()).estimate;
      continue;
    }
    // Only complement points inside lambda*h contribute; the window is in
    // covariate order, so the sums do not depend on row labels.
    std::vector<Index> comp_window;
    for (Index i : window)
      if (fold_of[static_cast<std::size_t>(i)] != static_cast<int>(k)) comp_window.push_back(i);
    fa.mu_hat = compute_mu_hat(data, comp_window, x0, h, config.p, config.K, kappa);
    fa.pilot_annulus.resize(static_cast<Index>(fa.annulus.size()));
    for (std::size_t j = 0; j < fa.annulus.size(); ++j)
      fa.pilot_annulus(static_cast<Index>(j)) =
          pilot.fit(data.X.row(fa.annulus[j]).transpose().eval()).estimate;
    fa.c_hat = compute_c_hat(data, fa.annulus, fa.pilot_annulus, x0, h, kappa);
  }

  if (config.force_gaussian_score && !out.empty()) {
    // One centred Gaussian shared by all folds: with the annulus term
    // suppressed this is exactly the LP normal equation.
    std::vector<double> pooled;
    for (const auto& fa : out) pooled.insert(pooled.end(), fa.score_residuals.begin(), fa.score_residuals.end());
    ScoreModel common = pooled.size() >= 2 ? gaussian_fallback(pooled) : out.front().score;
    common.mean = 0.0;
    for (auto& fa : out) {
      common.fold_id = fa.k;
      common.localization_radius = t;
      fa.score = common;
    }
  }
  return out;
}

namespace {

ScoringProblem outrigger_problem(const Dataset& data, const std::vector<FoldArtifacts>& folds,
                                 const Vector& x0, const OutriggerConfig& config) {
  const OutriggerKernel kappa = config.kappa();
  const LocalWeights lw(data, x0, config.h, config.K, kappa);
  const PolyBasis B(config.p, config.K.dim);

  Index m = 0;
  for (const auto& f : folds) m += static_cast<Index>(f.inner.size());
  ScoringProblem prob;
  prob.inv_n = 1.0 / static_cast<double>(data.size());
  prob.Q.resize(m, B.size());
  prob.w.resize(m);
  prob.y.resize(m);
  prob.offset = Vector::Zero(B.size());
  std::vector<int> group(static_cast<std::size_t>(m));

  Vector q(B.size());
  Index row = 0;
  double offset_scale = 0.0;
  for (std::size_t k = 0; k < folds.size(); ++k) {
    const FoldArtifacts& fa = folds[k];
    for (Index i : fa.inner) {
      const double w = lw.inner(lw.radius(i));
      lw.basis(B, q.data());
      prob.Q.row(row) = q.transpose();
      prob.w(row) = w;
      prob.y(row) = data.Y(i);
      group[static_cast<std::size_t>(row)] = static_cast<int>(k);
      ++row;
    }
    const double mu_norm = fa.mu_hat.lpNorm<Eigen::Infinity>();
    double acc = 0.0;
    for (std::size_t j = 0; j < fa.annulus.size(); ++j) {
      const Index i = fa.annulus[j];
      const double kw = lw.outer(lw.radius(i));
      const double rho = fa.score(data.Y(i) - fa.pilot_annulus(static_cast<Index>(j)) - fa.c_hat);
      acc += kw * rho;
      offset_scale += mu_norm * kw * std::abs(rho);
    }
    prob.offset -= prob.inv_n * acc * fa.mu_hat;
  }
  prob.offset_scale = prob.inv_n * offset_scale;
  prob.rho = [&folds, group = std::move(group)](Index i, double e) {
    return folds[static_cast<std::size_t>(group[static_cast<std::size_t>(i)])].score(e);
  };
  return prob;
}

}  // namespace

Vector estimating_equation(const Vector& theta, const Dataset& data,
                           const std::vector<FoldArtifacts>& folds, const Vector& x0,
                           const OutriggerConfig& config) {
  return outrigger_problem(data, folds, x0, config).evaluate(theta);
}

// ---------------------------------------------------------------------------

Vector ScoringProblem::evaluate(const Vector& theta) const {
  Vector s = Vector::Zero(Q.cols());
  for (Index i = 0; i < Q.rows(); ++i) {
    const double e = y(i) - Q.row(i).dot(theta);
    s.noalias() += (w(i) * rho(i, e)) * Q.row(i).transpose();
  }
  return offset + inv_n * s;
}

Matrix ScoringProblem::jacobian(const Vector& theta) const {
  Matrix J = Matrix::Zero(Q.cols(), Q.cols());
  for (Index i = 0; i < Q.rows(); ++i) {
    const double r = rho(i, y(i) - Q.row(i).dot(theta));
    J.selfadjointView<Eigen::Lower>().rankUpdate(Q.row(i).transpose(), w(i) * r * r);
  }
  J = J.selfadjointView<Eigen::Lower>();
  return inv_n * J;
}

double ScoringProblem::initial_scale(const Vector& theta) const {
  double s = 0.0;
  for (Index i = 0; i < Q.rows(); ++i) {
    const double r = rho(i, y(i) - Q.row(i).dot(theta));
    s += w(i) * Q.row(i).lpNorm<Eigen::Infinity>() * std::abs(r);
  }
  return inv_n * s + offset_scale;
}

FitResult fisher_scoring(const ScoringProblem& prob, const Vector& theta0, int max_iters,
                         double tol) {
  require(theta0.size() == prob.Q.cols(), "starting value has the wrong length",
          ErrorCode::DimensionMismatch);
  require(theta0.allFinite(), "starting value must be finite");
  require(max_iters >= 0 && tol > 0.0, "invalid Fisher scoring controls");

  FitResult out;
  out.theta = theta0;
  out.scale = prob.initial_scale(theta0);
  Vector S = prob.evaluate(theta0);
  double norm = S.lpNorm<Eigen::Infinity>();
  const double target = tol * out.scale;

  Vector step;
  while (out.iterations < max_iters && !(norm <= target)) {
    const Matrix J = prob.jacobian(out.theta);
    solve_spd_with_jitter(J, S, step, ErrorCode::SingularJacobian, "Fisher scoring information");
    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving <= 20; ++halving, t *= 0.5) {
      const Vector cand = out.theta - t * step;
      const Vector Sc = prob.evaluate(cand);
      const double nc = Sc.lpNorm<Eigen::Infinity>();
      if (std::isfinite(nc) && nc < norm) {
        out.theta = cand;
        S = Sc;
        norm = nc;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    ++out.iterations;
  }
  out.score_residual = norm;
  out.converged = norm <= target;
  out.estimate = out.theta(0);
  return out;
}

// ---------------------------------------------------------------------------

FitResult solve_multistart(const ScoringProblem& prob, const Vector& anchor,
                           const std::vector<Vector>& starts, int max_iters, double tol,
                           bool require_convergence) {
  std::optional<FitResult> best, best_unconverged;
  std::optional<Error> first_error;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const Vector& s : starts) {
    FitResult r;
    try {
      r = fisher_scoring(prob, s, max_iters, tol);
    } catch (const Error& e) {
      if (!first_error) first_error = e;
      continue;
    }
    if (!r.converged) {
      if (!best_unconverged || r.score_residual < best_unconverged->score_residual) best_unconverged = r;
      continue;
    }
    const double d = (r.theta - anchor).lpNorm<Eigen::Infinity>();
    const double slack = 1e-12 * std::max(1.0, d);
    if (!best || d < best_dist - slack || (std::abs(d - best_dist) <= slack && lex_less(r.theta, best->theta))) {
      best = r;
      best_dist = std::min(best_dist, d);
    }
  }
  if (best) return *best;
  if (best_unconverged) {
    if (!require_convergence) return *best_unconverged;
    fail(ErrorCode::NonConvergence,
         "Fisher scoring did not converge: ||S||_inf = " + fmt12(best_unconverged->score_residual) +
             " at estimate " + fmt12(best_unconverged->estimate) + " (tolerance " +
             fmt12(tol * best_unconverged->scale) + ")");
  }
  throw *first_error;
}

namespace {

std::vector<Vector> perturbed_starts(const Vector& anchor, double sigma, int n_starts) {
  std::vector<Vector> starts{anchor};
  const double size = 0.1 * sigma;
  if (!(size > 0.0)) return starts;
  Vector e1 = Vector::Zero(anchor.size());
  e1(0) = 1.0;
  const Vector ones = Vector::Ones(anchor.size());
  const Vector dirs[4] = {e1, -e1, ones, -ones};
  for (int j = 0; j < n_starts; ++j) {
    const Vector cand = anchor + size * (1 + j / 4) * dirs[j % 4];
    const bool dup = std::any_of(starts.begin(), starts.end(),
                                 [&](const Vector& s) { return s == cand; });
    if (!dup) starts.push_back(cand);
  }
  return starts;
}

double pooled_sd(const std::vector<FoldArtifacts>& folds) {
  double s = 0.0, s2 = 0.0, m = 0.0;
  for (const auto& f : folds)
    for (double r : f.score_residuals) {
      s += r;
      s2 += r * r;
      m += 1.0;
    }
  if (m < 2.0) return 0.0;
  const double mean = s / m;
  return std::sqrt(std::max(0.0, s2 / m - mean * mean));
}

}  // namespace

FitResult fit_outrigger(const Dataset& data, const Vector& x0, const OutriggerConfig& config) {
  config.validate();
  validate_inputs(data, x0);
  return fit_outrigger(data, x0, config, partition_folds(data.size(), config.n_folds, config.seed));
}

FitResult fit_outrigger(const Dataset& data, const Vector& x0, const OutriggerConfig& config,
                        const std::vector<std::vector<Index>>& folds) {
  config.validate();
  validate_inputs(data, x0);
  require(config.K.dim == data.dim(), "kernel dimension does not match the data",
          ErrorCode::DimensionMismatch);

  const LpFit lp = fit_lp(data, x0, config.h, config.p, config.K);
  auto artifacts = build_fold_artifacts(data, x0, config, folds);
  const auto starts = perturbed_starts(lp.theta, pooled_sd(artifacts), config.n_starts);
  FitResult fit = solve_multistart(outrigger_problem(data, artifacts, x0, config), lp.theta, starts,
                                   config.max_iters, config.tol, config.require_convergence);

  if (config.refit_score && !config.force_gaussian_score) {
    const PolyBasis B(config.p, config.K.dim);
    const NeighborIndex index(data.X);
    std::vector<Index> local;
    index.query(x0.data(), config.t(), config.K.norm_q, local);
    Vector u(data.dim());
    for (auto& fa : artifacts) {
      std::vector<char> in_fold(static_cast<std::size_t>(data.size()), 0);
      for (Index i : fa.fold) in_fold[static_cast<std::size_t>(i)] = 1;
      std::vector<double> res;
      for (Index i : local) {
        if (in_fold[static_cast<std::size_t>(i)]) continue;
        u = (data.X.row(i).transpose() - x0) / config.h;
        res.push_back(data.Y(i) - B.eval(u).dot(fit.theta));
      }
      fa.score = fit_local_score(res, res.size() >= 2 ? res : fa.score_residuals, config.score);
      fa.score.fold_id = fa.k;
      fa.score.localization_radius = config.t();
      fa.score_residuals = std::move(res);
    }
    fit = solve_multistart(outrigger_problem(data, artifacts, x0, config), lp.theta, starts,
                           config.max_iters, config.tol, config.require_convergence);
  }
  fit.pilot_estimate = lp.estimate;
  return fit;
}

// ---------------------------------------------------------------------------

FitResult fit_oracle_ll(const Dataset& data, const Vector& x0, double h, int p,
                        const KernelSpec& K, const OracleScore& score,
                        const ScoringOptions& opts) {
  K.validate();
  validate_inputs(data, x0);
  require(static_cast<bool>(score), "oracle score function is empty");
  const LpFit lp = fit_lp(data, x0, h, p, K);
  std::vector<Index> rows;
  ScoringProblem prob = inner_problem(data, x0, h, p, K, rows);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Xr(
      static_cast<Index>(rows.size()), data.dim());
  for (std::size_t j = 0; j < rows.size(); ++j) Xr.row(static_cast<Index>(j)) = data.X.row(rows[j]);
  prob.rho = [&score, Xr = std::move(Xr)](Index i, double e) {
    return score(e, Xr.row(i).data()).first;
  };
  FitResult fit = solve_multistart(prob, lp.theta, {lp.theta}, opts.max_iters, opts.tol,
                                   opts.require_convergence);
  fit.pilot_estimate = lp.estimate;
  return fit;
}

FitResult fit_plugin(const Dataset& data, const Vector& x0, double h, int p, const KernelSpec& K,
                     const ScoreModel& score, const ScoringOptions& opts) {
  K.validate();
  validate_inputs(data, x0);
  const LpFit lp = fit_lp(data, x0, h, p, K);
  std::vector<Index> rows;
  ScoringProblem prob = inner_problem(data, x0, h, p, K, rows);
  prob.rho = [&score](Index, double e) { return score(e); };
  FitResult fit = solve_multistart(prob, lp.theta, {lp.theta}, opts.max_iters, opts.tol,
                                   opts.require_convergence);
  fit.pilot_estimate = lp.estimate;
  return fit;
}

Vector pilot_residuals(const Dataset& data, const std::vector<Index>& rows, double h, int p,
                       const KernelSpec& K) {
  const LocalPolynomial lp(data, h, p, K);
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const Index i = rows[j];
    out(static_cast<Index>(j)) = data.Y(i) - lp.fit(data.X.row(i).transpose().eval()).estimate;
  }
  return out;
}

FitResult fit_plugin(const Dataset& data, const Vector& x0, double h, int p, const KernelSpec& K,
                     const ScoreFitConfig& score_config, double t, const ScoringOptions& opts) {
  K.validate();
  validate_inputs(data, x0);
  score_config.validate();
  require(t > 0.0, "localisation radius t must be positive");
  const NeighborIndex index(data.X);
  std::vector<Index> local;
  index.query(x0.data(), t, K.norm_q, local);
  const Vector r = pilot_residuals(data, local, h, p, K);
  std::vector<double> res(r.data(), r.data() + r.size());
  std::vector<double> all = res;
  if (res.size() < 2) {
    std::vector<Index> every(static_cast<std::size_t>(data.size()));
    std::iota(every.begin(), every.end(), Index{0});
    const Vector ra = pilot_residuals(data, every, h, p, K);
    all.assign(ra.data(), ra.data() + ra.size());
  }
  ScoreModel model = fit_local_score(res, all, score_config);
  model.localization_radius = t;
  return fit_plugin(data, x0, h, p, K, model, opts);
}

// ---------------------------------------------------------------------------

VariancePieces estimate_variance_pieces(const Dataset& data, const Vector& x0, double h,
                                        double lambda, const KernelSpec& K,
                                        const Vector& residuals, const ScoreModel& score) {
  K.validate();
  validate_inputs(data, x0);
  require(residuals.size() == data.size(), "one residual per observation is required",
          ErrorCode::DimensionMismatch);
  const OutriggerKernel kappa(lambda, K.dim, K.norm_q);
  const LocalWeights lw(data, x0, h, K, kappa);
  double sw = 0.0, se2 = 0.0, srho2 = 0.0;
  for (Index i = 0; i < data.size(); ++i) {
    const double w = lw.inner(lw.radius(i));
    if (!(w > 0.0)) continue;
    const double e = residuals(i);
    const double r = score(e);
    sw += w;
    se2 += w * e * e;
    srho2 += w * r * r;
  }
  if (!(sw > 0.0)) fail(ErrorCode::InsufficientLocalData, "no kernel weight at x0");
  VariancePieces vp;
  vp.p_hat = sw / static_cast<double>(data.size());
  vp.sigma2_hat = se2 / sw;
  vp.i_hat = srho2 / sw;
  if (!(vp.i_hat > 0.0)) fail(ErrorCode::InsufficientLocalData, "estimated Fisher information is zero");
  const double inv_i = 1.0 / vp.i_hat;
  const double ratio = kappa.r2() / kernel_r2(K);
  vp.v_lambda_hat = inv_i + (vp.sigma2_hat - inv_i) * ratio;
  if (std::abs(lambda - lambda0(K)) <= 1e-12 * lambda) vp.v_lambda_hat = vp.sigma2_hat;
  if (vp.v_lambda_hat < kVarianceClamp) {
    vp.v_lambda_hat = kVarianceClamp;
    vp.clamped = true;
  }
  return vp;
}

ConfidenceInterval confidence_interval(const FitResult& fit, const VariancePieces& pieces,
                                       Index n, double h, const KernelSpec& K, double level) {
  require(level > 0.0 && level < 1.0, "confidence level must lie in (0, 1)");
  require(n >= 1 && h > 0.0, "confidence interval needs n >= 1 and h > 0");
  require(std::isfinite(pieces.v_lambda_hat) && pieces.p_hat > 0.0,
          "variance pieces must be finite with p_hat > 0");
  const boost::math::normal_distribution<double> normal;
  const double z = boost::math::quantile(normal, 0.5 * (1.0 + level));
  const double var = kernel_r2(K) * pieces.v_lambda_hat /
                     (pieces.p_hat * static_cast<double>(n) * std::pow(h, K.dim));
  ConfidenceInterval ci;
  ci.level = level;
  ci.half_width = z * std::sqrt(var);
  ci.lower = fit.estimate - ci.half_width;
  ci.upper = fit.estimate + ci.half_width;
  ci.degenerate = pieces.clamped;
  return ci;
}

ScoreModel attach_confidence_interval(FitResult& fit, const Dataset& data, const Vector& x0,
                                const OutriggerConfig& config, double level) {
  config.validate();
  std::vector<Index> every(static_cast<std::size_t>(data.size()));
  std::iota(every.begin(), every.end(), Index{0});
  const Vector res = pilot_residuals(data, every, config.h, config.p, config.K);
  const ScoreModel score =
      fit_conditional_score(data, res, x0, config.t(), config.score, config.K.norm_q);
  const VariancePieces vp =
      estimate_variance_pieces(data, x0, config.h, config.lambda, config.K, res, score);
  fit.v_lambda_hat = vp.v_lambda_hat;
  fit.ci = confidence_interval(fit, vp, data.size(), config.h, config.K, level);
  return score;
}

}  // namespace outrigger
