#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "outrigger/spline.hpp"
#include "outrigger/types.hpp"

namespace outrigger {

enum class CvRule {
  Min,      // grid minimiser of the mean held-out loss
  OneSe,    // largest eta within one fold standard error of that minimum
};

CvRule parse_cv_rule(std::string_view name);
std::string to_string(CvRule rule);

struct ScoreFitConfig {
  std::vector<double> eta_grid = default_eta_grid();
  CvRule cv_rule = CvRule::OneSe;
  int cv_folds = 10;
  int max_interior_knots = 50;
  int min_samples = 10;
  std::uint64_t cv_seed = 0;

  /// 25 log-spaced values over [1e-6, 1e2].
  static std::vector<double> default_eta_grid();
  void validate() const;
};

/// Estimated score rho(e) of a residual distribution: a natural cubic spline
/// on [a0, b0] with linear continuation outside, or the Gaussian fallback
/// -(e - mean)/variance.
struct ScoreModel {
  NaturalSpline spline;
  double a0 = 0.0;
  double b0 = 0.0;
  double eta = 0.0;
  std::optional<int> fold_id;
  double localization_radius = 0.0;
  Index n_residuals = 0;

  bool fallback = false;
  double mean = 0.0;
  double variance = 1.0;

  double operator()(double e) const {
    return fallback ? -(e - mean) / variance : spline.eval(e);
  }
  double deriv(double e) const { return fallback ? -1.0 / variance : spline.deriv(e); }
};

double eval_score(const ScoreModel& model, double e);
double eval_score_deriv(const ScoreModel& model, double e);

/// Gaussian score with the residuals' mean and (population) variance.
ScoreModel gaussian_fallback(const std::vector<double>& residuals);

/// Knots at residual quantiles including the extremes a0 and b0.
std::vector<double> score_knots(std::vector<double> residuals, int max_interior_knots);

/// Quadratic form of the penalised score-matching loss over the spline space:
/// loss(g) = g^T M g + 2 dbar^T g + eta g^T Omega g.
struct ScoreMatchingSystem {
  NaturalSplineBasis basis;
  Matrix M;
  Vector dbar;
};

ScoreMatchingSystem build_score_system(const std::vector<double>& residuals,
                                       int max_interior_knots);

/// ||(M + eta Omega) g + dbar||_inf for a fitted spline model.
double stationarity_residual(const ScoreMatchingSystem& sys, const Vector& g, double eta);

/// Exact minimiser of the penalised empirical score-matching loss for a fixed
/// eta; throws TooFewResiduals below config.min_samples.
ScoreModel fit_score_spline(const std::vector<double>& residuals, double eta,
                            const ScoreFitConfig& config = {});

/// Held-out score-matching loss per eta (ascending) and fold: result[g][f].
std::vector<std::vector<double>> cv_fold_losses(const std::vector<double>& residuals,
                                                const ScoreFitConfig& config);

/// Mean over folds of cv_fold_losses, in ascending eta order.
std::vector<double> cv_losses(const std::vector<double>& residuals, const ScoreFitConfig& config);

/// Cross-validated choice of eta by held-out score-matching loss, following
/// config.cv_rule. Ties at the minimum go to the smallest eta.
double cv_select_eta(const std::vector<double>& residuals, const ScoreFitConfig& config);

/// Score fitted on residuals of the points within distance t of x0, with eta
/// chosen by cross-validation. Falls back to the Gaussian model when fewer
/// than min_samples points are local, or when the fitted slope is
/// non-negative everywhere on [a0, b0].
ScoreModel fit_conditional_score(const Dataset& data, const Vector& pilot_residuals,
                                 const Vector& x0, double t, const ScoreFitConfig& config,
                                 double norm_q = 2.0);

/// Same as fit_conditional_score for residuals that are already localised;
/// `all` backs the Gaussian fallback when `local` cannot.
ScoreModel fit_local_score(const std::vector<double>& local, const std::vector<double>& all,
                           const ScoreFitConfig& config);

/// Writes "e,rho,rho_prime" rows over `points` evenly spaced values spanning
/// [a0 - pad, b0 + pad].
void write_score_curve_csv(const ScoreModel& model, std::ostream& os, int points = 201,
                           double pad = 0.0);

}  // namespace outrigger
