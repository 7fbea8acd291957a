#include <catch2/catch_amalgamated.hpp>

#include "ncbridge/errors.hpp"
#include "ncbridge/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

using namespace ncbridge;

namespace {

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

SimulationReport small_study(double eta) {
  return run_study({Scenario::binary_exposure, eta, 0.6, 200}, {Estimator::nc, Estimator::ipw, Estimator::ols}, 5,
                   11, {0, 1});
}

void check_equal(const SimulationReport& a, const SimulationReport& b) {
  CHECK(a.config.scenario == b.config.scenario);
  CHECK(a.config.eta == b.config.eta);
  CHECK(a.config.xi == b.config.xi);
  CHECK(a.config.n == b.config.n);
  CHECK(a.replications == b.replications);
  CHECK(a.seed == b.seed);
  CHECK(a.truth == b.truth);
  REQUIRE(a.summaries.size() == b.summaries.size());
  for (std::size_t k = 0; k < a.summaries.size(); ++k) {
    const auto &s = a.summaries[k], &t = b.summaries[k];
    CHECK(s.estimator == t.estimator);
    CHECK(s.converged == t.converged);
    CHECK(s.failed == t.failed);
    CHECK(same(s.mean, t.mean));
    CHECK(same(s.bias, t.bias));
    CHECK(same(s.sd, t.sd));
    CHECK(same(s.mean_se, t.mean_se));
    CHECK(same(s.coverage, t.coverage));
  }
  REQUIRE(a.replicates.size() == b.replicates.size());
  for (std::size_t k = 0; k < a.replicates.size(); ++k) {
    REQUIRE(a.replicates[k].size() == b.replicates[k].size());
    for (std::size_t r = 0; r < a.replicates[k].size(); ++r) {
      CHECK(same(a.replicates[k][r].estimate, b.replicates[k][r].estimate));
      CHECK(same(a.replicates[k][r].std_error, b.replicates[k][r].std_error));
      CHECK(a.replicates[k][r].ok == b.replicates[k][r].ok);
    }
  }
}

}  // namespace

TEST_CASE("estimate report round-trips through JSON") {
  EstimateWithSE e{0.1 + 0.2, 1.0 / 3.0, "nc", {"weak identification"}};
  EstimateReport r = make_estimate_report(e, "x", 500);
  r.hac_bandwidth = 10;
  r.labels = {"(1)", "x", "w"};
  r.theta = {1e-300, -2.5, 3.141592653589793};
  r.std_errors = {std::numeric_limits<double>::quiet_NaN(), 0.25, 7e20};

  CHECK(r.ci_lo < r.estimate);
  CHECK(r.ci_hi > r.estimate);
  CHECK(r.p_value > 0.0);
  CHECK(r.p_value < 1.0);

  const std::string text = to_json(r);
  CHECK(text.find("null") != std::string::npos);
  const EstimateReport back = estimate_report_from_json(text);
  CHECK(back.method == r.method);
  CHECK(back.parameter == r.parameter);
  CHECK(back.estimate == r.estimate);
  CHECK(back.std_error == r.std_error);
  CHECK(back.ci_lo == r.ci_lo);
  CHECK(back.ci_hi == r.ci_hi);
  CHECK(back.p_value == r.p_value);
  CHECK(back.n == r.n);
  CHECK(back.hac_bandwidth == r.hac_bandwidth);
  CHECK(back.labels == r.labels);
  CHECK(back.theta == r.theta);
  REQUIRE(back.std_errors.size() == 3);
  CHECK(std::isnan(back.std_errors[0]));
  CHECK(back.std_errors[1] == 0.25);
  CHECK(back.std_errors[2] == 7e20);
  CHECK(back.warnings == r.warnings);
  CHECK(to_json(back) == text);
}

TEST_CASE("malformed JSON is a data error") {
  CHECK_THROWS_AS(estimate_report_from_json("{"), DataError);
  CHECK_THROWS_AS(estimate_report_from_json("[1, 2]"), DataError);
  CHECK_THROWS_AS(simulation_report_from_json("{\"replications\": \"many\"}"), DataError);
  CHECK_THROWS_AS(simulation_grid_from_json("{}"), DataError);
}

TEST_CASE("simulation reports round-trip with NaN coverage") {
  const SimulationReport r = small_study(0.5);
  CHECK(std::isnan(r.summary(Estimator::ipw).coverage));
  const std::string text = to_json(r);
  const SimulationReport back = simulation_report_from_json(text);
  check_equal(r, back);
  CHECK(to_json(back) == text);

  const std::vector<SimulationReport> grid{small_study(0.0), small_study(0.5)};
  const std::vector<SimulationReport> grid_back = simulation_grid_from_json(to_json(grid));
  REQUIRE(grid_back.size() == 2);
  check_equal(grid[0], grid_back[0]);
  check_equal(grid[1], grid_back[1]);
}

TEST_CASE("replicate CSV has one row per replication and estimator") {
  const SimulationReport r = small_study(0.3);
  std::ostringstream out;
  write_replicates_csv(out, r);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "scenario,eta,xi,n,replication,estimator,estimate,std_error,ok");
  int rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 15);

  std::ostringstream grid_out;
  write_replicates_csv(grid_out, std::vector<SimulationReport>{r, r});
  const std::string grid_text = grid_out.str();
  CHECK(std::count(grid_text.begin(), grid_text.end(), '\n') == 31);
}

TEST_CASE("tables mention every estimator and section") {
  const SimulationReport r = small_study(0.5);
  const std::string table = format_table(r);
  CHECK(table.find("nc") != std::string::npos);
  CHECK(table.find("ipw") != std::string::npos);
  CHECK(table.find("ols") != std::string::npos);

  std::mt19937_64 rng(5);
  const SeriesFrame frame = generate_series({Scenario::timeseries, 0.5, 0.9, 400}, rng);
  const SeriesReport s = analyze_series(frame, HacConfig::fixed(5));
  const std::string series = format_table(s, 100.0);
  CHECK(series.find("Ordinary least squares") != std::string::npos);
  CHECK(series.find("Confounding test") != std::string::npos);
  CHECK(series.find("Negative control estimation") != std::string::npos);
  CHECK_NOTHROW((void)to_json(s));

  const std::string grid =
      format_coverage_grid({run_study({Scenario::binary_exposure, 0.0, 0.2, 100}, {Estimator::nc}, 3, 1, {0, 1}),
                            run_study({Scenario::binary_exposure, 0.5, 0.6, 100}, {Estimator::nc}, 3, 1, {0, 1})});
  CHECK(grid.find("0.6") < grid.find("0.2"));

  const CounterexampleReport c = counterexample_check(1, 20000);
  CHECK(format_table(c).find("PASS") != std::string::npos);
  CHECK(to_json(c).find("\"pass\"") != std::string::npos);
}
