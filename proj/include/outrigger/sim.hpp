#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "outrigger/dgp.hpp"
#include "outrigger/estimator.hpp"

namespace outrigger {

enum class EstimatorName { Lp, Outrigger, OracleLl, Plugin };

EstimatorName parse_estimator_name(std::string_view name);
std::string to_string(EstimatorName name);

struct ExperimentConfig {
  DgpSpec dgp;
  Index n = 2000;
  double x0 = 0.0;
  int reps = 200;
  std::uint64_t base_seed = 0;
  std::vector<EstimatorName> estimators{EstimatorName::Lp, EstimatorName::Outrigger};
  std::vector<double> h_grid{0.12};
  std::vector<double> lambda_grid{8.0};
  int p = 0;
  KernelSpec K;
  int n_folds = 2;
  std::optional<double> localization;         // outrigger score window; h when unset
  std::optional<double> plugin_localization;  // plug-in score window; h when unset
  ScoreFitConfig score;
  int max_iters = 50;
  double tol = 1e-8;
  int n_starts = 4;
  int threads = 0;  // 0: OUTRIGGER_THREADS or the OpenMP default
  std::string out;  // CSV path used by the CLI

  void validate() const;
  bool has(EstimatorName e) const;
};

struct CellResult {
  EstimatorName estimator;
  double h = 0.0;
  std::optional<double> lambda;  // only for the outrigger
  double mse = 0.0;
  double mse_se = 0.0;
  double bias = 0.0;
  double variance = 0.0;
  int failures = 0;
  int successes = 0;
  std::optional<double> theory_ratio;
};

struct RatioCell {
  double h;
  double lambda;
  double ratio;  // mse(outrigger) / mse(lp)
  std::optional<double> theory;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<CellResult> cells;
  std::vector<RatioCell> ratios;
  std::vector<std::uint64_t> dataset_checksums;  // one per rep
  // errors[cell][rep] = estimate - f(x0), NaN on failure.
  std::vector<std::vector<double>> errors;

  const CellResult& cell(EstimatorName e, double h, std::optional<double> lambda = {}) const;
  /// Grid h minimising mse for the estimator (and lambda, for the outrigger).
  double best_h(EstimatorName e, std::optional<double> lambda = {}) const;
  double min_mse(EstimatorName e, std::optional<double> lambda = {}) const;
};

/// Every estimator at every (h, lambda) on reps datasets drawn with seeds
/// base_seed + r. Reps run concurrently and are merged in rep order.
ExperimentResult run_experiment(const ExperimentConfig& config);
/// Single-threaded reference with the same output.
ExperimentResult run_experiment_serial(const ExperimentConfig& config);

/// run_experiment over config.h_grid at the first lambda.
ExperimentResult bandwidth_sweep(const ExperimentConfig& config);
/// run_experiment over the part of config.lambda_grid above lambda0(K), at
/// the first h, with the theoretical ratio attached.
ExperimentResult lambda_sweep(const ExperimentConfig& config);

/// FNV-1a over the bytes of X and Y.
std::uint64_t dataset_checksum(const Dataset& data);

void write_result_csv(const ExperimentResult& result, std::ostream& os);
void write_ratio_table(const ExperimentResult& result, std::ostream& os);

/// Strict JSON reader: unknown keys and bad values throw MalformedInput or
/// the module's validation errors.
ExperimentConfig parse_experiment_config(const std::string& json_text);
/// Every field, defaults included, in a fixed order.
std::string experiment_config_to_json(const ExperimentConfig& config);

/// Worker count from OUTRIGGER_THREADS, or 0 when unset.
int threads_from_env();

}  // namespace outrigger
