#include <cmath>
#include <sstream>
#include <string>

#include "doctest.h"
#include "outrigger/error.hpp"
#include "outrigger/io.hpp"
#include "outrigger/sim.hpp"

using namespace outrigger;

namespace {

ExperimentConfig small_config(DgpName dgp = DgpName::Gauss) {
  ExperimentConfig c;
  c.dgp = DgpSpec(dgp);
  c.n = 800;
  c.reps = 12;
  c.base_seed = 100;
  c.h_grid = {0.15, 0.25};
  c.lambda_grid = {8.0};
  c.localization = 0.5;
  return c;
}

std::string csv_of(const ExperimentResult& r) {
  std::ostringstream os;
  write_result_csv(r, os);
  return os.str();
}

}  // namespace

TEST_CASE("estimator names") {
  for (auto e : {EstimatorName::Lp, EstimatorName::Outrigger, EstimatorName::OracleLl, EstimatorName::Plugin})
    CHECK(parse_estimator_name(to_string(e)) == e);
  CHECK_THROWS_AS(parse_estimator_name("kernel"), Error);
}

TEST_CASE("config validation") {
  ExperimentConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.reps = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_THROWS_AS(run_experiment(c), Error);
  c = small_config();
  c.lambda_grid = {1.0};
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config();
  c.h_grid = {0.3, 0.1};
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config();
  c.estimators = {EstimatorName::Lp, EstimatorName::Lp};
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config();
  c.x0 = 2.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c.dgp = DgpSpec(DgpName::ExpT3);
  CHECK_NOTHROW(c.validate());
  c = small_config();
  c.h_grid = {};
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("run_experiment: determinism, cells, pairing") {
  ExperimentConfig c = small_config();
  c.estimators = {EstimatorName::Lp};
  const ExperimentResult a = run_experiment(c);
  const ExperimentResult b = run_experiment(c);
  CHECK(csv_of(a) == csv_of(b));
  REQUIRE(a.cells.size() == 2);
  CHECK_FALSE(a.cells[0].lambda.has_value());
  CHECK(a.cells[0].successes == 12);
  CHECK(a.cells[0].mse == doctest::Approx(a.cells[0].bias * a.cells[0].bias + a.cells[0].variance));
  CHECK(a.dataset_checksums.size() == 12);
  for (int r = 0; r < 12; ++r)
    CHECK(a.dataset_checksums[static_cast<std::size_t>(r)] ==
          dataset_checksum(sample(c.dgp, c.n, c.base_seed + static_cast<std::uint64_t>(r))));

  // LP column unchanged when the outrigger joins
  ExperimentConfig both = c;
  both.estimators = {EstimatorName::Lp, EstimatorName::Outrigger};
  const ExperimentResult ab = run_experiment(both);
  CHECK(ab.dataset_checksums == a.dataset_checksums);
  for (double h : c.h_grid) {
    CHECK(ab.cell(EstimatorName::Lp, h).mse == a.cell(EstimatorName::Lp, h).mse);
    CHECK(ab.cell(EstimatorName::Outrigger, h, 8.0).lambda == 8.0);
  }
  REQUIRE(ab.ratios.size() == 2);
  CHECK(ab.ratios[0].ratio == doctest::Approx(ab.cell(EstimatorName::Outrigger, 0.15).mse /
                                              ab.cell(EstimatorName::Lp, 0.15).mse));
  CHECK(ab.ratios[0].theory.has_value());
  CHECK(*ab.ratios[0].theory == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("run_experiment: worker count and serial reference agree") {
  ExperimentConfig c = small_config(DgpName::ScaleMix);
  c.estimators = {EstimatorName::Lp, EstimatorName::Outrigger, EstimatorName::OracleLl, EstimatorName::Plugin};
  c.h_grid = {0.2};
  c.threads = 1;
  const std::string one = csv_of(run_experiment(c));
  c.threads = 4;
  const ExperimentResult four = run_experiment(c);
  CHECK(csv_of(four) == one);
  CHECK(csv_of(run_experiment_serial(c)) == one);
  CHECK(four.errors.size() == 4);
}

TEST_CASE("bandwidth_sweep: a single-point grid equals run_experiment") {
  ExperimentConfig c = small_config(DgpName::LocMix);
  c.h_grid = {0.2};
  c.lambda_grid = {8.0, 16.0};
  const ExperimentResult sweep = bandwidth_sweep(c);
  c.lambda_grid = {8.0};
  const ExperimentResult run = run_experiment(c);
  CHECK(csv_of(sweep) == csv_of(run));
}

TEST_CASE("lambda_sweep: grid clipping, theory column, errors") {
  ExperimentConfig c = small_config(DgpName::ScaleMix);
  c.estimators = {EstimatorName::Outrigger};
  c.lambda_grid = {1.5, 4.0, 8.0};
  const ExperimentResult r = lambda_sweep(c);
  CHECK(r.config.lambda_grid == std::vector<double>{4.0, 8.0});
  CHECK(r.config.h_grid.size() == 1);
  CHECK(r.config.has(EstimatorName::Lp));
  REQUIRE(r.ratios.size() == 2);
  CHECK(r.ratios[0].theory.has_value());
  CHECK(*r.ratios[1].theory < *r.ratios[0].theory);

  c.lambda_grid = {1.0};
  try {
    lambda_sweep(c);
    FAIL("expected InvalidArgument");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("all-failed estimator is an error; partial failures are counted") {
  ExperimentConfig c = small_config();
  c.estimators = {EstimatorName::Lp};
  c.n = 3;
  c.h_grid = {0.01};
  CHECK_THROWS_AS(run_experiment(c), Error);
}

TEST_CASE("config JSON: parse, defaults, echo, strictness") {
  const ExperimentConfig c = parse_experiment_config(
      R"({"dgp": "scale_mix", "n": 500, "reps": 3, "h": {"from": 0.1, "to": 0.3, "step": 0.1},
          "lambda": [4, 8], "estimators": ["lp", "outrigger"], "plugin_localization": "inf"})");
  CHECK(c.dgp.name == DgpName::ScaleMix);
  CHECK(c.n == 500);
  REQUIRE(c.h_grid.size() == 3);
  CHECK(c.h_grid[2] == doctest::Approx(0.3));
  CHECK(c.lambda_grid == std::vector<double>{4.0, 8.0});
  CHECK(std::isinf(*c.plugin_localization));
  CHECK_FALSE(c.localization.has_value());

  const std::string echo = experiment_config_to_json(c);
  CHECK(experiment_config_to_json(parse_experiment_config(echo)) == echo);
  CHECK(echo.find("\"eta_grid\"") != std::string::npos);
  CHECK(echo.find("\"inf\"") != std::string::npos);

  auto code_of = [](const std::string& text) {
    try {
      parse_experiment_config(text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::NonConvergence;
  };
  CHECK(code_of(R"({"dgp": "nope"})") == ErrorCode::UnknownName);
  CHECK(code_of(R"({"dgp": "gauss", "bogus": 1})") == ErrorCode::MalformedInput);
  CHECK(code_of(R"({"dgp": "gauss", "n": "many"})") == ErrorCode::MalformedInput);
  CHECK(code_of("{not json") == ErrorCode::MalformedInput);
  CHECK(code_of(R"({"dgp": "gauss", "lambda": 1.0})") == ErrorCode::InvalidArgument);
  CHECK(code_of(R"({"dgp": "gauss", "reps": 0})") == ErrorCode::InvalidArgument);
}

TEST_CASE("result CSV layout") {
  ExperimentConfig c = small_config();
  c.h_grid = {0.2};
  const std::string csv = csv_of(run_experiment(c));
  CHECK(csv.rfind("dgp,estimator,h,lambda,n,reps,mse,mse_se,bias,variance,failures,theory_ratio\n", 0) == 0);
  CHECK(csv.find("gauss,lp,0.2,,800,12,") != std::string::npos);
  CHECK(csv.find("gauss,outrigger,0.2,8,800,12,") != std::string::npos);
  std::ostringstream table;
  write_ratio_table(run_experiment(c), table);
  CHECK_FALSE(table.str().empty());
}

TEST_CASE("Gaussian errors: outrigger and local polynomial are on par") {
  ExperimentConfig c;
  c.dgp = DgpSpec(DgpName::Gauss);
  c.n = 2000;
  c.reps = 200;
  c.h_grid = {0.12};
  c.lambda_grid = {8.0};
  c.localization = 0.5;
  const ExperimentResult r = run_experiment(c);
  REQUIRE(r.ratios.size() == 1);
  CHECK(r.ratios[0].ratio >= 0.90);
  CHECK(r.ratios[0].ratio <= 1.15);
}

TEST_CASE("threads_from_env") {
  setenv("OUTRIGGER_THREADS", "3", 1);
  CHECK(threads_from_env() == 3);
  unsetenv("OUTRIGGER_THREADS");
  CHECK(threads_from_env() == 0);
}
