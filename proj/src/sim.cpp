#include "outrigger/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <ostream>
#include <set>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "outrigger/error.hpp"
#include "outrigger/io.hpp"
#include "outrigger/lp.hpp"

namespace outrigger {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// One fitted quantity per (estimator, h, lambda).
struct CellKey {
  EstimatorName est;
  double h;
  std::optional<double> lambda;
};

std::vector<CellKey> cell_keys(const ExperimentConfig& c) {
  std::vector<CellKey> keys;
  for (EstimatorName e : c.estimators)
    for (double h : c.h_grid) {
      if (e == EstimatorName::Outrigger)
        for (double l : c.lambda_grid) keys.push_back({e, h, l});
      else
        keys.push_back({e, h, std::nullopt});
    }
  return keys;
}

double fit_cell(const ExperimentConfig& c, const CellKey& key, const Dataset& data,
                std::uint64_t seed) {
  const Vector x0 = Vector::Constant(1, c.x0);
  switch (key.est) {
    case EstimatorName::Lp:
      return fit_lp(data, x0, key.h, c.p, c.K).estimate;
    case EstimatorName::Outrigger: {
      OutriggerConfig oc;
      oc.h = key.h;
      oc.lambda = *key.lambda;
      oc.p = c.p;
      oc.K = c.K;
      oc.n_folds = c.n_folds;
      oc.score = c.score;
      oc.localization = c.localization;
      oc.max_iters = c.max_iters;
      oc.tol = c.tol;
      oc.n_starts = c.n_starts;
      oc.seed = seed;
      return fit_outrigger(data, x0, oc).estimate;
    }
    case EstimatorName::OracleLl: {
      const DgpSpec dgp = c.dgp;
      const OracleScore score = [dgp](double e, const double* x) {
        const ScoreValue v = oracle_score(dgp, e, x[0]);
        return std::make_pair(v.rho, v.rho_prime);
      };
      return fit_oracle_ll(data, x0, key.h, c.p, c.K, score, {c.max_iters, c.tol, true}).estimate;
    }
    case EstimatorName::Plugin:
      return fit_plugin(data, x0, key.h, c.p, c.K, c.score, c.plugin_localization.value_or(key.h),
                        {c.max_iters, c.tol, true})
          .estimate;
  }
  return kNaN;
}

struct RepOutput {
  std::vector<double> err;
  std::vector<std::string> messages;
  std::uint64_t checksum = 0;
};

RepOutput run_rep(const ExperimentConfig& c, const std::vector<CellKey>& keys, int r) {
  const std::uint64_t seed = c.base_seed + static_cast<std::uint64_t>(r);
  const Dataset data = sample(c.dgp, c.n, seed);
  const double truth = c.dgp.regression(c.x0);
  RepOutput out;
  out.checksum = dataset_checksum(data);
  out.err.assign(keys.size(), kNaN);
  out.messages.resize(keys.size());
  for (std::size_t k = 0; k < keys.size(); ++k) {
    try {
      out.err[k] = fit_cell(c, keys[k], data, seed) - truth;
    } catch (const Error& e) {
      out.messages[k] = std::string(to_string(e.code())) + ": " + e.what();
    }
  }
  return out;
}

ExperimentResult assemble(const ExperimentConfig& c, const std::vector<CellKey>& keys,
                          std::vector<RepOutput>& reps) {
  ExperimentResult res;
  res.config = c;
  res.errors.assign(keys.size(), std::vector<double>(reps.size(), kNaN));
  for (std::size_t r = 0; r < reps.size(); ++r) {
    res.dataset_checksums.push_back(reps[r].checksum);
    for (std::size_t k = 0; k < keys.size(); ++k) res.errors[k][r] = reps[r].err[k];
  }

  std::optional<PopulationQuantities> pq;
  if (c.dgp.finite_fisher_information()) pq = population_quantities(c.dgp, c.x0, c.K);

  for (std::size_t k = 0; k < keys.size(); ++k) {
    CellResult cell;
    cell.estimator = keys[k].est;
    cell.h = keys[k].h;
    cell.lambda = keys[k].lambda;
    double s = 0.0, s2 = 0.0, s4 = 0.0;
    std::string first_message;
    for (std::size_t r = 0; r < reps.size(); ++r) {
      const double e = res.errors[k][r];
      if (std::isnan(e)) {
        ++cell.failures;
        if (first_message.empty()) first_message = reps[r].messages[k];
        continue;
      }
      ++cell.successes;
      s += e;
      s2 += e * e;
      s4 += e * e * e * e;
    }
    if (cell.successes == 0)
      fail(ErrorCode::NonConvergence, "every replication failed for " + to_string(cell.estimator) +
                                          " at h = " + format_g12(cell.h) + " (" + first_message + ")");
    const double m = cell.successes;
    cell.bias = s / m;
    double var = 0.0;
    for (std::size_t r = 0; r < reps.size(); ++r) {
      const double e = res.errors[k][r];
      if (!std::isnan(e)) var += (e - cell.bias) * (e - cell.bias);
    }
    cell.variance = var / m;
    cell.mse = cell.bias * cell.bias + cell.variance;
    const double mean_sq = s2 / m;
    cell.mse_se = m > 1 ? std::sqrt(std::max(0.0, s4 / m - mean_sq * mean_sq) / (m - 1)) : 0.0;
    if (pq && cell.lambda) cell.theory_ratio = pq->asymptotic_ratio(*cell.lambda);
    res.cells.push_back(cell);
  }

  if (c.has(EstimatorName::Lp) && c.has(EstimatorName::Outrigger)) {
    for (double h : c.h_grid)
      for (double l : c.lambda_grid) {
        RatioCell rc{h, l, res.cell(EstimatorName::Outrigger, h, l).mse /
                               res.cell(EstimatorName::Lp, h).mse,
                     std::nullopt};
        if (pq) rc.theory = pq->asymptotic_ratio(l);
        res.ratios.push_back(rc);
      }
  }
  return res;
}

ExperimentResult run_impl(const ExperimentConfig& config, bool parallel) {
  config.validate();
  const auto keys = cell_keys(config);
  std::vector<RepOutput> reps(static_cast<std::size_t>(config.reps));
  int threads = config.threads > 0 ? config.threads : threads_from_env();
#ifdef _OPENMP
  if (threads <= 0) threads = omp_get_max_threads();
#else
  threads = 1;
#endif
  if (!parallel) threads = 1;
  (void)threads;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) if (parallel && threads > 1)
  for (int r = 0; r < config.reps; ++r) reps[static_cast<std::size_t>(r)] = run_rep(config, keys, r);
  return assemble(config, keys, reps);
}

bool near(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); }

}  // namespace

// ---------------------------------------------------------------------------

EstimatorName parse_estimator_name(std::string_view name) {
  if (name == "lp") return EstimatorName::Lp;
  if (name == "outrigger") return EstimatorName::Outrigger;
  if (name == "oracle_ll") return EstimatorName::OracleLl;
  if (name == "plugin") return EstimatorName::Plugin;
  fail(ErrorCode::UnknownName, "unknown estimator '" + std::string(name) +
                                   "' (expected lp, outrigger, oracle_ll or plugin)");
}

std::string to_string(EstimatorName name) {
  switch (name) {
    case EstimatorName::Lp: return "lp";
    case EstimatorName::Outrigger: return "outrigger";
    case EstimatorName::OracleLl: return "oracle_ll";
    case EstimatorName::Plugin: return "plugin";
  }
  return "?";
}

bool ExperimentConfig::has(EstimatorName e) const {
  return std::find(estimators.begin(), estimators.end(), e) != estimators.end();
}

void ExperimentConfig::validate() const {
  K.validate();
  require(n >= 1, "n must be positive");
  require(reps >= 1, "reps must be at least 1");
  require(std::isfinite(x0), "x0 must be finite");
  require(!estimators.empty(), "no estimators requested");
  std::set<EstimatorName> seen(estimators.begin(), estimators.end());
  require(seen.size() == estimators.size(), "estimators are listed twice");
  require(!h_grid.empty(), "h grid is empty");
  require(std::is_sorted(h_grid.begin(), h_grid.end()), "h grid must be sorted");
  for (double h : h_grid) require(h > 0.0 && std::isfinite(h), "bandwidths must be positive");
  require(p >= 0, "degree must be non-negative");
  require(n_folds >= 2, "cross-fitting needs at least two folds");
  require(max_iters >= 1 && tol > 0.0 && n_starts >= 0, "invalid solver controls");
  require(threads >= 0, "threads must be non-negative");
  if (localization) require(*localization > 0.0, "localization must be positive");
  if (plugin_localization) require(*plugin_localization > 0.0, "plugin_localization must be positive");
  score.validate();
  if (has(EstimatorName::Outrigger)) {
    require(!lambda_grid.empty(), "lambda grid is empty");
    require(std::is_sorted(lambda_grid.begin(), lambda_grid.end()), "lambda grid must be sorted");
    OutriggerConfig oc;
    oc.K = K;
    oc.h = h_grid.front();
    oc.n_folds = n_folds;
    oc.score = score;
    for (double l : lambda_grid) {
      oc.lambda = l;
      oc.validate();
    }
  }
  if (!dgp.errors_depend_on_x())
    require(x0 > -2.0 && x0 < 2.0, "x0 must lie inside the covariate support (-2, 2)");
}

const CellResult& ExperimentResult::cell(EstimatorName e, double h,
                                         std::optional<double> lambda) const {
  for (const auto& c : cells) {
    if (c.estimator != e || !near(c.h, h)) continue;
    if (e == EstimatorName::Outrigger) {
      const double l = lambda ? *lambda : config.lambda_grid.front();
      if (!near(*c.lambda, l)) continue;
    }
    return c;
  }
  fail(ErrorCode::InvalidArgument, "no result for " + to_string(e) + " at h = " + format_g12(h));
}

double ExperimentResult::best_h(EstimatorName e, std::optional<double> lambda) const {
  double best = config.h_grid.front();
  double best_mse = std::numeric_limits<double>::infinity();
  for (double h : config.h_grid) {
    const double m = cell(e, h, lambda).mse;
    if (m < best_mse) {
      best_mse = m;
      best = h;
    }
  }
  return best;
}

double ExperimentResult::min_mse(EstimatorName e, std::optional<double> lambda) const {
  return cell(e, best_h(e, lambda), lambda).mse;
}

ExperimentResult run_experiment(const ExperimentConfig& config) { return run_impl(config, true); }

ExperimentResult run_experiment_serial(const ExperimentConfig& config) {
  return run_impl(config, false);
}

ExperimentResult bandwidth_sweep(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  if (!c.lambda_grid.empty()) c.lambda_grid.resize(1);
  return run_experiment(c);
}

ExperimentResult lambda_sweep(const ExperimentConfig& config) {
  config.K.validate();
  require(!config.h_grid.empty(), "h grid is empty");
  ExperimentConfig c = config;
  c.h_grid.resize(1);
  const double l0 = lambda0(config.K);
  c.lambda_grid.clear();
  for (double l : config.lambda_grid)
    if (l > l0) c.lambda_grid.push_back(l);
  if (c.lambda_grid.empty())
    fail(ErrorCode::InvalidArgument,
         "every lambda in the grid is at or below lambda0(K) = " + format_g12(l0));
  if (!c.has(EstimatorName::Lp)) c.estimators.insert(c.estimators.begin(), EstimatorName::Lp);
  if (!c.has(EstimatorName::Outrigger)) c.estimators.push_back(EstimatorName::Outrigger);
  return run_experiment(c);
}

std::uint64_t dataset_checksum(const Dataset& data) {
  std::uint64_t hash = 1469598103934665603ULL;
  auto feed = [&](double v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char b : bytes) {
      hash ^= b;
      hash *= 1099511628211ULL;
    }
  };
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.dim(); ++j) feed(data.X(i, j));
    feed(data.Y(i));
  }
  return hash;
}

void write_result_csv(const ExperimentResult& result, std::ostream& os) {
  const auto& c = result.config;
  os << "dgp,estimator,h,lambda,n,reps,mse,mse_se,bias,variance,failures,theory_ratio\n";
  for (const auto& cell : result.cells) {
    os << to_string(c.dgp.name) << ',' << to_string(cell.estimator) << ',' << format_g12(cell.h)
       << ',' << (cell.lambda ? format_g12(*cell.lambda) : "") << ',' << c.n << ',' << c.reps << ','
       << format_g12(cell.mse) << ',' << format_g12(cell.mse_se) << ',' << format_g12(cell.bias)
       << ',' << format_g12(cell.variance) << ',' << cell.failures << ','
       << (cell.theory_ratio ? format_g12(*cell.theory_ratio) : "") << '\n';
  }
}

void write_ratio_table(const ExperimentResult& result, std::ostream& os) {
  os << "h,lambda,ratio,theory\n";
  for (const auto& r : result.ratios)
    os << format_g12(r.h) << ',' << format_g12(r.lambda) << ',' << format_g12(r.ratio) << ','
       << (r.theory ? format_g12(*r.theory) : "") << '\n';
}

int threads_from_env() {
  const char* v = std::getenv("OUTRIGGER_THREADS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  const long t = std::strtol(v, &end, 10);
  require(end && *end == '\0' && t >= 1 && t <= 4096,
          std::string("OUTRIGGER_THREADS must be a positive integer, got '") + v + "'");
  return static_cast<int>(t);
}

// ---------------------------------------------------------------------------

namespace {

using json = nlohmann::ordered_json;

template <class T>
T get_as(const json& j, const char* key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::MalformedInput, std::string("config field '") + key + "' has the wrong type");
  }
}

std::vector<double> number_list(const json& j, const char* key) {
  if (j.is_number()) return {j.get<double>()};
  if (!j.is_array()) fail(ErrorCode::MalformedInput, std::string("config field '") + key + "' must be a number or a list");
  return get_as<std::vector<double>>(j, key);
}

// A number, or the string "inf".
double number_or_inf(const json& j, const char* key) {
  if (j.is_string() && j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  return get_as<double>(j, key);
}

json number_or_inf_json(double v) {
  return std::isinf(v) && v > 0.0 ? json("inf") : json(round_sig12(v));
}

// {"from": a, "to": b, "step": s} expands to a, a+s, ..., b.
std::vector<double> grid_value(const json& j, const char* key) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() != "from" && it.key() != "to" && it.key() != "step")
        fail(ErrorCode::MalformedInput, std::string("unknown key '") + it.key() + "' in " + key);
    if (!j.contains("from") || !j.contains("to") || !j.contains("step"))
      fail(ErrorCode::MalformedInput, std::string(key) + " range needs from, to and step");
    const double a = get_as<double>(j["from"], key);
    const double b = get_as<double>(j["to"], key);
    const double s = get_as<double>(j["step"], key);
    require(s > 0.0 && b >= a, std::string(key) + " range needs step > 0 and to >= from");
    std::vector<double> out;
    const int count = static_cast<int>(std::floor((b - a) / s + 1e-9));
    for (int k = 0; k <= count; ++k) out.push_back(round_sig12(a + k * s));
    return out;
  }
  return number_list(j, key);
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::MalformedInput, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::MalformedInput, "config must be a JSON object");

  ExperimentConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    if (k == "dgp") c.dgp = DgpSpec(get_as<std::string>(v, "dgp"));
    else if (k == "n") c.n = get_as<Index>(v, "n");
    else if (k == "x0") c.x0 = get_as<double>(v, "x0");
    else if (k == "reps") c.reps = get_as<int>(v, "reps");
    else if (k == "base_seed" || k == "seed") c.base_seed = get_as<std::uint64_t>(v, "base_seed");
    else if (k == "estimators") {
      c.estimators.clear();
      if (v.is_string()) c.estimators.push_back(parse_estimator_name(v.get<std::string>()));
      else
        for (const auto& s : get_as<std::vector<std::string>>(v, "estimators"))
          c.estimators.push_back(parse_estimator_name(s));
    } else if (k == "h_grid" || k == "h") c.h_grid = grid_value(v, "h_grid");
    else if (k == "lambda_grid" || k == "lambda") c.lambda_grid = grid_value(v, "lambda_grid");
    else if (k == "degree" || k == "p") c.p = get_as<int>(v, "degree");
    else if (k == "kernel") c.K.name = parse_kernel_name(get_as<std::string>(v, "kernel"));
    else if (k == "norm_q") c.K.norm_q = number_or_inf(v, "norm_q");
    else if (k == "folds") c.n_folds = get_as<int>(v, "folds");
    else if (k == "localization") {
      if (!v.is_null()) c.localization = number_or_inf(v, "localization");
    } else if (k == "plugin_localization") {
      if (!v.is_null()) c.plugin_localization = number_or_inf(v, "plugin_localization");
    } else if (k == "eta_grid") c.score.eta_grid = number_list(v, "eta_grid");
    else if (k == "cv_folds") c.score.cv_folds = get_as<int>(v, "cv_folds");
    else if (k == "max_interior_knots") c.score.max_interior_knots = get_as<int>(v, "max_interior_knots");
    else if (k == "min_samples") c.score.min_samples = get_as<int>(v, "min_samples");
    else if (k == "cv_rule") c.score.cv_rule = parse_cv_rule(get_as<std::string>(v, "cv_rule"));
    else if (k == "cv_seed") c.score.cv_seed = get_as<std::uint64_t>(v, "cv_seed");
    else if (k == "max_iters") c.max_iters = get_as<int>(v, "max_iters");
    else if (k == "tol") c.tol = get_as<double>(v, "tol");
    else if (k == "n_starts") c.n_starts = get_as<int>(v, "n_starts");
    else if (k == "threads") c.threads = get_as<int>(v, "threads");
    else if (k == "out") c.out = get_as<std::string>(v, "out");
    else fail(ErrorCode::MalformedInput, "unknown config key '" + k + "'");
  }
  c.validate();
  return c;
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  json j;
  j["dgp"] = to_string(c.dgp.name);
  j["n"] = c.n;
  j["x0"] = round_sig12(c.x0);
  j["reps"] = c.reps;
  j["base_seed"] = c.base_seed;
  json est = json::array();
  for (auto e : c.estimators) est.push_back(to_string(e));
  j["estimators"] = est;
  json hg = json::array();
  for (double h : c.h_grid) hg.push_back(round_sig12(h));
  j["h_grid"] = hg;
  json lg = json::array();
  for (double l : c.lambda_grid) lg.push_back(round_sig12(l));
  j["lambda_grid"] = lg;
  j["degree"] = c.p;
  j["kernel"] = to_string(c.K.name);
  j["norm_q"] = number_or_inf_json(c.K.norm_q);
  j["folds"] = c.n_folds;
  j["localization"] = c.localization ? number_or_inf_json(*c.localization) : json(nullptr);
  j["plugin_localization"] =
      c.plugin_localization ? number_or_inf_json(*c.plugin_localization) : json(nullptr);
  json eg = json::array();
  for (double e : c.score.eta_grid) eg.push_back(round_sig12(e));
  j["eta_grid"] = eg;
  j["cv_folds"] = c.score.cv_folds;
  j["max_interior_knots"] = c.score.max_interior_knots;
  j["min_samples"] = c.score.min_samples;
  j["cv_rule"] = to_string(c.score.cv_rule);
  j["cv_seed"] = c.score.cv_seed;
  j["max_iters"] = c.max_iters;
  j["tol"] = round_sig12(c.tol);
  j["n_starts"] = c.n_starts;
  j["threads"] = c.threads;
  j["out"] = c.out;
  return j.dump(2);
}

}  // namespace outrigger
