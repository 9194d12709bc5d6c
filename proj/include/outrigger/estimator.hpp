#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "outrigger/kernel.hpp"
#include "outrigger/score.hpp"
#include "outrigger/types.hpp"

namespace outrigger {

struct OutriggerConfig {
  double h = 0.1;
  double lambda = 8.0;
  int p = 0;
  KernelSpec K;
  int n_folds = 2;
  ScoreFitConfig score;
  std::optional<double> localization;  // radius t of the score window; h when unset
  int max_iters = 50;
  double tol = 1e-8;
  std::uint64_t seed = 0;
  int n_starts = 4;  // perturbed starts besides the pilot
  bool require_convergence = true;

  // Diagnostics: replace every fold score by one centred Gaussian, or drop
  // the annulus term (mu_hat = 0, c_hat = 0).
  bool force_gaussian_score = false;
  bool suppress_outrigger_term = false;
  // One extra pass that refits the fold scores on residuals from the first
  // outrigger root instead of the pilot.
  bool refit_score = false;

  double t() const { return localization.value_or(h); }
  OutriggerKernel kappa() const { return {lambda, K.dim, K.norm_q}; }
  /// Checks every precondition, including lambda > lambda0(K).
  void validate() const;
};

/// Random partition of {0..n-1} into n_folds sets whose sizes differ by at
/// most one; each set is sorted.
std::vector<std::vector<Index>> partition_folds(Index n, int n_folds, std::uint64_t seed);

/// mu_hat = [sum kappa_{h,lambda}]^{-1} sum K_h Q_h over `idx`.
Vector compute_mu_hat(const Dataset& data, const std::vector<Index>& idx, const Vector& x0,
                      double h, int p, const KernelSpec& K, const OutriggerKernel& kappa);

/// Annulus-weighted mean of Y - pilot over `idx`; pilot[j] belongs to idx[j].
double compute_c_hat(const Dataset& data, const std::vector<Index>& idx, const Vector& pilot,
                     const Vector& x0, double h, const OutriggerKernel& kappa);

struct FoldArtifacts {
  int k = 0;
  std::vector<Index> fold;         // I_k
  std::vector<Index> inner;        // in-fold points with K_h > 0
  std::vector<Index> annulus;      // in-fold points with kappa_{h,lambda} > 0
  Vector pilot_annulus;            // complement pilot at the annulus points
  Vector mu_hat;
  double c_hat = 0.0;
  ScoreModel score;
  std::vector<double> score_residuals;  // complement residuals the score was fitted on
};

/// Builds the per-fold nuisance pieces. `folds` must partition the rows.
std::vector<FoldArtifacts> build_fold_artifacts(const Dataset& data, const Vector& x0,
                                                const OutriggerConfig& config,
                                                const std::vector<std::vector<Index>>& folds);

/// (1/n) sum_k sum_{i in I_k} {K_h Q_h - mu_hat_k kappa_{h,lambda}} rho_k(r_i), where
/// r_i = Y_i - Q_h^T theta on the inner ball and Y_i - pilot - c_hat_k on the annulus.
Vector estimating_equation(const Vector& theta, const Dataset& data,
                           const std::vector<FoldArtifacts>& folds, const Vector& x0,
                           const OutriggerConfig& config);

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  double half_width = 0.0;
  bool degenerate = false;  // V_hat hit the 1e-12 clamp
};

struct FitResult {
  Vector theta;
  double estimate = 0.0;
  int iterations = 0;
  double score_residual = 0.0;  // ||S(theta)||_inf
  double scale = 0.0;           // convergence scale fixed at the start
  bool converged = false;
  double pilot_estimate = 0.0;
  std::optional<double> v_lambda_hat;
  std::optional<ConfidenceInterval> ci;
};

/// Inner-ball terms of a score equation (1/n) sum w_i Q_i rho_i(Y_i - Q_i^T theta)
/// plus a theta-free offset. `rho(i, e)` returns the score of term i.
struct ScoringProblem {
  Matrix Q;  // m x p_bar
  Vector w;
  Vector y;
  Vector offset;
  double inv_n = 1.0;
  double offset_scale = 0.0;  // sum of |terms| folded into `offset`, for the tolerance
  std::function<double(Index, double)> rho;

  Vector evaluate(const Vector& theta) const;
  Matrix jacobian(const Vector& theta) const;  // (1/n) sum w Q Q^T rho^2
  double initial_scale(const Vector& theta) const;
};

/// theta <- theta - J^{-1} S with step halving; stops once ||S||_inf <= tol * scale.
FitResult fisher_scoring(const ScoringProblem& prob, const Vector& theta0, int max_iters,
                         double tol);

/// Runs fisher_scoring from every start and keeps the converged root nearest
/// the anchor in l_inf, ties going to the lexicographically smallest root.
FitResult solve_multistart(const ScoringProblem& prob, const Vector& anchor,
                           const std::vector<Vector>& starts, int max_iters, double tol,
                           bool require_convergence);

/// Outrigger estimator at x0 with a seeded fold partition.
FitResult fit_outrigger(const Dataset& data, const Vector& x0, const OutriggerConfig& config);
/// Same with an explicit partition.
FitResult fit_outrigger(const Dataset& data, const Vector& x0, const OutriggerConfig& config,
                        const std::vector<std::vector<Index>>& folds);

/// (e, x) -> (rho, rho') of the true conditional law; x is the covariate row.
using OracleScore = std::function<std::pair<double, double>(double e, const double* x)>;

struct ScoringOptions {
  int max_iters = 50;
  double tol = 1e-8;
  bool require_convergence = true;
};

/// Local likelihood with the known conditional score.
FitResult fit_oracle_ll(const Dataset& data, const Vector& x0, double h, int p,
                        const KernelSpec& K, const OracleScore& score,
                        const ScoringOptions& opts = {});

/// Local likelihood with an estimated score plugged in.
FitResult fit_plugin(const Dataset& data, const Vector& x0, double h, int p, const KernelSpec& K,
                     const ScoreModel& score, const ScoringOptions& opts = {});

/// Plug-in with the score fitted on full-sample pilot residuals within t of x0.
FitResult fit_plugin(const Dataset& data, const Vector& x0, double h, int p, const KernelSpec& K,
                     const ScoreFitConfig& score_config, double t,
                     const ScoringOptions& opts = {});

/// Full-sample LP residuals Y_i - f_LP(X_i) at the given rows.
Vector pilot_residuals(const Dataset& data, const std::vector<Index>& rows, double h, int p,
                       const KernelSpec& K);

struct VariancePieces {
  double p_hat = 0.0;
  double sigma2_hat = 0.0;
  double i_hat = 0.0;
  double v_lambda_hat = 0.0;
  bool clamped = false;
};

/// K_h-weighted plug-in estimates of p_X(x0), sigma^2(x0), i(x0) and V(lambda).
/// `residuals` has one entry per row of `data`.
VariancePieces estimate_variance_pieces(const Dataset& data, const Vector& x0, double h,
                                        double lambda, const KernelSpec& K,
                                        const Vector& residuals, const ScoreModel& score);

/// estimate +/- z sqrt(R2(K) V / (p_hat n h^d)); ignores bias.
ConfidenceInterval confidence_interval(const FitResult& fit, const VariancePieces& pieces,
                                       Index n, double h, const KernelSpec& K,
                                       double level = 0.95);

/// Fills fit.v_lambda_hat and fit.ci from full-sample pilot residuals and a
/// score fitted on those within config.t() of x0; returns that score.
ScoreModel attach_confidence_interval(FitResult& fit, const Dataset& data, const Vector& x0,
                                const OutriggerConfig& config, double level = 0.95);

}  // namespace outrigger
