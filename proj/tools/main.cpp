// Command-line front end. Exit codes: 0 success, 2 validation error,
// 3 solver error.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "outrigger/dgp.hpp"
#include "outrigger/error.hpp"
#include "outrigger/estimator.hpp"
#include "outrigger/io.hpp"
#include "outrigger/kernel.hpp"
#include "outrigger/lp.hpp"
#include "outrigger/score.hpp"
#include "outrigger/sim.hpp"

using namespace outrigger;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitSolver = 3;

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || *end != '\0' || !std::isfinite(v))
      fail(ErrorCode::InvalidArgument, std::string("cannot parse '") + item + "' in " + what);
    out.push_back(v);
  }
  require(!out.empty(), std::string(what) + " is empty");
  return out;
}

double parse_norm(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  return parse_list(s, "--norm-q").at(0);
}

json number(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  if (std::isnan(v)) return json(nullptr);
  return json(round_sig12(v));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::InvalidArgument, "cannot write '" + path + "'");
  os << text;
}

// ---------------------------------------------------------------------------
// fit

struct FitOptions {
  std::string data;
  std::string x0 = "0";
  double h = 0.1;
  double lambda = 8.0;
  int degree = 0;
  std::string kernel = "epanechnikov";
  std::string norm_q = "2";
  int folds = 2;
  std::uint64_t seed = 0;
  std::string estimator = "outrigger";
  std::optional<double> localization;
  double level = 0.95;
  bool no_ci = false;
  std::string score_out;
  std::string out;
  bool print_config = false;
};

OutriggerConfig fit_config(const FitOptions& o) {
  OutriggerConfig c;
  c.h = o.h;
  c.lambda = o.lambda;
  c.p = o.degree;
  c.K.name = parse_kernel_name(o.kernel);
  c.K.norm_q = parse_norm(o.norm_q);
  c.n_folds = o.folds;
  c.seed = o.seed;
  c.localization = o.localization;
  return c;
}

json fit_config_json(const FitOptions& o, const OutriggerConfig& c) {
  json j;
  j["data"] = o.data;
  j["estimator"] = o.estimator;
  j["x0"] = o.x0;
  j["h"] = number(c.h);
  j["lambda"] = number(c.lambda);
  j["degree"] = c.p;
  j["kernel"] = to_string(c.K.name);
  j["norm_q"] = number(c.K.norm_q);
  j["folds"] = c.n_folds;
  j["seed"] = c.seed;
  j["localization"] = number(c.t());
  j["level"] = number(o.level);
  j["ci"] = !o.no_ci;
  j["max_iters"] = c.max_iters;
  j["tol"] = number(c.tol);
  j["n_starts"] = c.n_starts;
  json eg = json::array();
  for (double e : c.score.eta_grid) eg.push_back(number(e));
  j["eta_grid"] = eg;
  j["cv_folds"] = c.score.cv_folds;
  j["cv_rule"] = to_string(c.score.cv_rule);
  j["max_interior_knots"] = c.score.max_interior_knots;
  j["min_samples"] = c.score.min_samples;
  return j;
}

json fit_json(const FitResult& f) {
  json j;
  j["estimate"] = number(f.estimate);
  j["pilot_estimate"] = number(f.pilot_estimate);
  json th = json::array();
  for (Index k = 0; k < f.theta.size(); ++k) th.push_back(number(f.theta(k)));
  j["theta"] = th;
  j["iterations"] = f.iterations;
  j["converged"] = f.converged;
  j["v_lambda_hat"] = f.v_lambda_hat ? number(*f.v_lambda_hat) : json(nullptr);
  if (f.ci) {
    json ci;
    ci["lower"] = number(f.ci->lower);
    ci["upper"] = number(f.ci->upper);
    ci["level"] = number(f.ci->level);
    j["ci"] = ci;
  }
  return j;
}

int cmd_fit(const FitOptions& o) {
  const OutriggerConfig cfg = fit_config(o);
  const std::string est = o.estimator;
  require(est == "outrigger" || est == "lp" || est == "plugin",
          "unknown estimator '" + est + "' (expected outrigger, lp or plugin)", ErrorCode::UnknownName);
  if (est == "outrigger") cfg.validate();
  else cfg.K.validate();
  require(o.level > 0.0 && o.level < 1.0, "--level must lie in (0, 1)");
  if (o.print_config) {
    std::cout << fit_config_json(o, cfg).dump(2) << '\n';
    return 0;
  }
  require(!o.data.empty(), "fit needs a CSV file");
  const Dataset data = read_csv_file(o.data);
  data.validate();
  const std::vector<double> xs = parse_list(o.x0, "--x0");
  require(static_cast<Index>(xs.size()) == data.dim(),
          "--x0 has " + std::to_string(xs.size()) + " coordinates but the data have " +
              std::to_string(data.dim()) + " covariates",
          ErrorCode::DimensionMismatch);
  require(cfg.K.dim == 1 || cfg.K.dim == data.dim(), "kernel dimension mismatch",
          ErrorCode::DimensionMismatch);
  OutriggerConfig c = cfg;
  c.K.dim = static_cast<int>(data.dim());
  const Vector x0 = Eigen::Map<const Vector>(xs.data(), static_cast<Index>(xs.size()));

  FitResult fit;
  std::optional<ScoreModel> score;
  if (est == "outrigger") {
    fit = fit_outrigger(data, x0, c);
    if (!o.no_ci || !o.score_out.empty()) {
      FitResult with_ci = fit;
      score = attach_confidence_interval(with_ci, data, x0, c, o.level);
      if (!o.no_ci) fit = with_ci;
    }
  } else if (est == "lp") {
    const LpFit lp = fit_lp(data, x0, c.h, c.p, c.K);
    fit.theta = lp.theta;
    fit.estimate = lp.estimate;
    fit.pilot_estimate = lp.estimate;
    fit.converged = true;
    if (!o.no_ci) {
      // lambda0 gives V = sigma^2, the LP variance.
      std::vector<Index> every(static_cast<std::size_t>(data.size()));
      for (Index i = 0; i < data.size(); ++i) every[static_cast<std::size_t>(i)] = i;
      const Vector res = pilot_residuals(data, every, c.h, c.p, c.K);
      const ScoreModel g = gaussian_fallback(std::vector<double>(res.data(), res.data() + res.size()));
      const auto vp = estimate_variance_pieces(data, x0, c.h, lambda0(c.K), c.K, res, g);
      fit.v_lambda_hat = vp.v_lambda_hat;
      fit.ci = confidence_interval(fit, vp, data.size(), c.h, c.K, o.level);
    }
  } else {
    fit = fit_plugin(data, x0, c.h, c.p, c.K, c.score, c.t());
  }
  if (!o.score_out.empty()) {
    require(score.has_value(), "--score-out is only available for the outrigger estimator");
    std::ostringstream ss;
    write_score_curve_csv(*score, ss);
    write_text(o.score_out, ss.str());
  }
  const std::string text = fit_json(fit).dump(2) + "\n";
  if (o.out.empty()) std::cout << text;
  else write_text(o.out, text);
  return 0;
}

// ---------------------------------------------------------------------------
// simulate / sweeps

struct SimOptions {
  std::string config;
  std::optional<double> x0, h, lambda;
  std::optional<int> degree, folds, reps, threads;
  std::optional<std::string> kernel, estimators, out;
  std::optional<std::uint64_t> seed;
  bool print_config = false;
};

enum class SimKind { Run, SweepH, SweepLambda };

ExperimentConfig sim_config(const SimOptions& o) {
  ExperimentConfig c = parse_experiment_config(read_text_file(o.config));
  if (o.x0) c.x0 = *o.x0;
  if (o.h) c.h_grid = {*o.h};
  if (o.lambda) c.lambda_grid = {*o.lambda};
  if (o.degree) c.p = *o.degree;
  if (o.folds) c.n_folds = *o.folds;
  if (o.reps) c.reps = *o.reps;
  if (o.threads) c.threads = *o.threads;
  if (o.kernel) c.K.name = parse_kernel_name(*o.kernel);
  if (o.seed) c.base_seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.estimators) {
    c.estimators.clear();
    std::stringstream ss(*o.estimators);
    std::string item;
    while (std::getline(ss, item, ',')) c.estimators.push_back(parse_estimator_name(item));
  }
  c.validate();
  return c;
}

int cmd_sim(const SimOptions& o, SimKind kind) {
  const ExperimentConfig c = sim_config(o);
  if (o.print_config) {
    std::cout << experiment_config_to_json(c) << '\n';
    return 0;
  }
  const ExperimentResult res = kind == SimKind::SweepH        ? bandwidth_sweep(c)
                               : kind == SimKind::SweepLambda ? lambda_sweep(c)
                                                              : run_experiment(c);
  std::ostringstream csv;
  write_result_csv(res, csv);
  std::ostringstream table;
  write_ratio_table(res, table);
  if (c.out.empty()) {
    std::cout << csv.str();
    std::cerr << table.str();
  } else {
    write_text(c.out, csv.str());
    std::cout << "wrote " << c.out << '\n' << table.str();
  }
  for (const auto& cell : res.cells)
    if (cell.failures > 0)
      std::cerr << "note: " << to_string(cell.estimator) << " at h=" << format_g12(cell.h) << " failed in "
                << cell.failures << " of " << c.reps << " reps\n";
  return 0;
}

// ---------------------------------------------------------------------------
// theory / population

struct TheoryOptions {
  std::string dgp;
  double x0 = 0.0;
  std::string lambda = "2,4,8,16,32";
  std::string kernel = "epanechnikov";
  std::string out;
};

int cmd_theory(const TheoryOptions& o) {
  const DgpSpec spec(o.dgp);
  KernelSpec K;
  K.name = parse_kernel_name(o.kernel);
  const std::vector<double> grid = parse_list(o.lambda, "--lambda");
  if (!spec.finite_fisher_information())
    fail(ErrorCode::InfiniteFisherInformation,
         o.dgp + " has infinite Fisher information; the ratio curve is undefined");
  const auto rows = theoretical_ratio_curve(spec, o.x0, grid, K);
  std::ostringstream ss;
  write_ratio_csv(rows, ss);
  if (o.out.empty()) std::cout << ss.str();
  else write_text(o.out, ss.str());
  return 0;
}

struct PopulationOptions {
  std::vector<std::string> dgps;
  double x0 = 0.0;
  std::string kernel = "epanechnikov";
  std::string out;
};

int cmd_population(const PopulationOptions& o) {
  KernelSpec K;
  K.name = parse_kernel_name(o.kernel);
  std::vector<DgpSpec> specs;
  if (o.dgps.empty() || (o.dgps.size() == 1 && o.dgps[0] == "all"))
    for (DgpName n : all_dgps()) specs.emplace_back(n);
  else
    for (const auto& s : o.dgps) specs.emplace_back(s);
  std::ostringstream ss;
  bool header = true;
  for (const auto& spec : specs) {
    std::ostringstream row;
    write_population_csv(spec, population_quantities(spec, o.x0, K), row);
    std::string text = row.str();
    if (!header) text = text.substr(text.find('\n') + 1);
    header = false;
    ss << text;
  }
  if (o.out.empty()) std::cout << ss.str();
  else write_text(o.out, ss.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outrigger local polynomial regression"};
  app.require_subcommand(1);
  // -h would clash with the bandwidth option.
  app.set_help_flag("--help", "Print this help message and exit");

  FitOptions fo;
  auto* fit = app.add_subcommand("fit", "Fit at x0 on a CSV with header x1,...,xd,y; prints JSON");
  fit->add_option("data", fo.data, "Input CSV");
  fit->add_option("--x0", fo.x0, "Evaluation point, comma-separated for d > 1");
  fit->add_option("--h", fo.h, "Bandwidth");
  fit->add_option("--lambda", fo.lambda, "Outrigger parameter");
  fit->add_option("--degree", fo.degree, "Local polynomial degree");
  fit->add_option("--kernel", fo.kernel, "epanechnikov, uniform or triweight");
  fit->add_option("--norm-q", fo.norm_q, "Norm index of the kernel ball (number or inf)");
  fit->add_option("--folds", fo.folds, "Cross-fitting folds");
  fit->add_option("--seed", fo.seed, "Fold partition seed");
  fit->add_option("--estimator,--estimators", fo.estimator, "outrigger, lp or plugin");
  fit->add_option("--localization", fo.localization, "Score window radius (default h)");
  fit->add_option("--level", fo.level, "Confidence level");
  fit->add_flag("--no-ci", fo.no_ci, "Skip the confidence interval");
  fit->add_option("--score-out", fo.score_out, "Write the fitted score curve as CSV");
  fit->add_option("--out", fo.out, "Write the JSON here instead of standard output");
  fit->add_flag("--print-config", fo.print_config, "Print the resolved configuration and exit");

  SimOptions so;
  auto add_sim = [&](const char* name, const char* help) {
    auto* s = app.add_subcommand(name, help);
    s->add_option("config", so.config, "Experiment JSON")->required();
    s->add_option("--x0", so.x0, "Override x0");
    s->add_option("--h", so.h, "Override the bandwidth grid with one value");
    s->add_option("--lambda", so.lambda, "Override the lambda grid with one value");
    s->add_option("--degree", so.degree, "Override the degree");
    s->add_option("--kernel", so.kernel, "Override the kernel");
    s->add_option("--folds", so.folds, "Override the fold count");
    s->add_option("--seed", so.seed, "Override the base seed");
    s->add_option("--reps", so.reps, "Override the replication count");
    s->add_option("--threads", so.threads, "Worker count (0: OUTRIGGER_THREADS or all cores)");
    s->add_option("--estimators,--estimator", so.estimators, "Comma-separated estimator list");
    s->add_option("--out", so.out, "CSV output path");
    s->add_flag("--print-config", so.print_config, "Print the resolved configuration and exit");
    return s;
  };
  auto* simulate = add_sim("simulate", "Monte Carlo comparison at every (h, lambda)");
  auto* sweep_h = add_sim("sweep-h", "Bandwidth sweep at the first lambda");
  auto* sweep_l = add_sim("sweep-lambda", "Lambda sweep at the first h with the theory column");

  TheoryOptions to;
  auto* theory = app.add_subcommand("theory", "Theoretical MSE ratio curve (lambda, V, ratio)");
  theory->add_option("--dgp", to.dgp, "Distribution name")->required();
  theory->add_option("--x0", to.x0, "Covariate value");
  theory->add_option("--lambda", to.lambda, "Comma-separated lambda grid");
  theory->add_option("--kernel", to.kernel, "Primary kernel");
  theory->add_option("--out", to.out, "CSV output path");

  PopulationOptions po;
  auto* population = app.add_subcommand("population", "sigma^2, Fisher information and R2(K) by quadrature");
  population->add_option("--dgp", po.dgps, "Distribution names, or all");
  population->add_option("--x0", po.x0, "Covariate value");
  population->add_option("--kernel", po.kernel, "Primary kernel");
  population->add_option("--out", po.out, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (fit->parsed()) return cmd_fit(fo);
    if (simulate->parsed()) return cmd_sim(so, SimKind::Run);
    if (sweep_h->parsed()) return cmd_sim(so, SimKind::SweepH);
    if (sweep_l->parsed()) return cmd_sim(so, SimKind::SweepLambda);
    if (theory->parsed()) return cmd_theory(to);
    if (population->parsed()) return cmd_population(po);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return e.is_validation() ? kExitValidation : kExitSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSolver;
  }
  return kExitValidation;
}
