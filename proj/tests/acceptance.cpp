// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "ncbridge/errors.hpp"
#include "ncbridge/estimators.hpp"
#include "ncbridge/gmm.hpp"
#include "ncbridge/simulation.hpp"
#include "ncbridge/summary.hpp"

#include "oracles.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

using namespace ncbridge;

namespace {

constexpr int kReps = 1000;
constexpr std::uint64_t kSeed = 20240101;
constexpr double kCoverageTol = 0.03;
constexpr double kDegradedTol = 0.05;
constexpr double kMcSeBound = 4.0;

using CellKey = std::tuple<Scenario, double, double, Index>;
std::map<CellKey, SimulationReport> cache;

const SimulationReport& study(Scenario s, double eta, double xi, Index n) {
  const CellKey key{s, eta, xi, n};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const DgpConfig cfg{s, eta, xi, n};
  StudyOptions opts;
  opts.ipw_bootstrap = 0;
  return cache.emplace(key, run_study(cfg, default_estimators(s), kReps, kSeed, opts)).first->second;
}

std::string cell(Scenario s, double eta, double xi, Index n) {
  std::ostringstream out;
  out << to_string(s) << "(eta=" << eta << ",xi=" << xi << ",n=" << n << ")";
  return out.str();
}

double z_bias(const EstimatorSummary& e) { return std::abs(e.bias) / e.mc_se(); }

struct Criterion {
  int id;
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [FAIL " << what << "]";
    }
  }
};

int failures = 0;

void report(Criterion& c, const std::string& title) {
  std::cout << (c.pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << title << c.detail.str() << std::endl;
  if (!c.pass) ++failures;
}

void coverage_cell(Criterion& c, Scenario s, double eta, double xi, Index n, double target, double tol) {
  const double cov = study(s, eta, xi, n).summary(Estimator::nc).coverage;
  c.detail << " " << cell(s, eta, xi, n) << " cov=" << cov << " vs " << target;
  c.check(std::abs(cov - target) <= tol, cell(s, eta, xi, n));
}

void criterion1() {
  Criterion c{1};
  const Scenario s = Scenario::binary_exposure;
  coverage_cell(c, s, 0.5, 0.6, 500, 0.945, kCoverageTol);
  coverage_cell(c, s, 0.5, 0.6, 1500, 0.936, kCoverageTol);
  coverage_cell(c, s, 0.0, 0.2, 500, 0.978, kCoverageTol);
  coverage_cell(c, s, 0.0, 0.2, 1500, 0.979, kCoverageTol);
  report(c, "binary-exposure NC coverage");
}

void criterion2() {
  Criterion c{2};
  const Scenario s = Scenario::structural_continuous;
  for (Index n : {500, 1500}) {
    for (double eta : {0.0, 0.3, 0.5}) coverage_cell(c, s, eta, 0.0, n, 0.95, kCoverageTol);
    for (double xi : {0.4, 0.6}) coverage_cell(c, s, 0.0, xi, n, 0.95, kCoverageTol);
  }
  coverage_cell(c, s, 0.5, 0.6, 1500, 0.473, kDegradedTol);
  report(c, "structural NC coverage");
}

void criterion3() {
  Criterion c{3};
  const Scenario s = Scenario::timeseries;
  const double targets[] = {0.947, 0.950, 0.947};
  const double etas[] = {0.0, 0.3, 0.5};
  for (int k = 0; k < 3; ++k) {
    coverage_cell(c, s, etas[k], 0.9, 1500, targets[k], kCoverageTol);
    const EstimatorSummary& nc = study(s, etas[k], 0.9, 1500).summary(Estimator::nc);
    c.detail << " mean=" << nc.mean << " z=" << z_bias(nc);
    c.check(z_bias(nc) < kMcSeBound, "centering " + cell(s, etas[k], 0.9, 1500));
  }
  report(c, "time-series NC coverage and centering at 0.7");
}

void bias_check(Criterion& c, Scenario s, double eta, double xi, Estimator e, bool biased) {
  const EstimatorSummary& sum = study(s, eta, xi, 1500).summary(e);
  const double z = z_bias(sum);
  c.detail << " " << to_string(e) << "@" << cell(s, eta, xi, 1500) << " |bias|/mcse=" << z;
  c.check(biased ? z > kMcSeBound : z < kMcSeBound, std::string(to_string(e)) + " " + cell(s, eta, xi, 1500));
}

void criterion4() {
  Criterion c{4};
  const Scenario b = Scenario::binary_exposure, st = Scenario::structural_continuous, ts = Scenario::timeseries;
  bias_check(c, b, 0.5, 0.6, Estimator::nc, false);
  bias_check(c, b, 0.0, 0.2, Estimator::nc, false);
  bias_check(c, st, 0.5, 0.0, Estimator::nc, false);
  bias_check(c, st, 0.0, 0.6, Estimator::nc, false);
  for (double eta : {0.0, 0.3, 0.5}) bias_check(c, ts, eta, 0.9, Estimator::nc, false);
  bias_check(c, b, 0.5, 0.6, Estimator::ols, true);
  bias_check(c, st, 0.5, 0.0, Estimator::ols, true);
  bias_check(c, st, 0.3, 0.0, Estimator::ols, true);
  bias_check(c, ts, 0.5, 0.9, Estimator::ols, true);
  bias_check(c, ts, 0.3, 0.9, Estimator::ols, true);
  bias_check(c, b, 0.5, 0.6, Estimator::ipw, true);
  report(c, "bias pattern of NC, OLS and IPW");
}

void criterion5() {
  Criterion c{5};
  const Scenario st = Scenario::structural_continuous;
  bias_check(c, st, 0.0, 0.4, Estimator::nc, false);
  bias_check(c, st, 0.5, 0.0, Estimator::nc, false);
  bias_check(c, st, 0.5, 0.6, Estimator::nc, true);
  report(c, "double robustness of the NC estimator");
}

void criterion6() {
  Criterion c{6};
  std::mt19937_64 rng(kSeed + 6);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double eta = unif(rng), xi = unif(rng);
    const Index n = 50 + static_cast<Index>(k) * 10;
    const NCDataset d = k % 2 == 0 ? generate_binary_exposure({Scenario::binary_exposure, eta, xi, n}, rng)
                                   : generate_structural({Scenario::structural_continuous, eta, xi, n}, rng);
    const double a = nc_tsls(d).value, e = nc_estimate(d).value;
    worst = std::max(worst, std::abs(a - e) / std::max(1.0, std::abs(e)));
  }
  c.detail << " max gap=" << worst;
  c.check(worst <= 1e-10, "tsls identity");
  report(c, "two stage least squares identity on 100 fixtures");
}

void criterion7() {
  Criterion c{7};
  const RiskDifferenceSummary s = parse_summary(
      "rd_xy_given_z = -150\n"
      "rd_xw_given_z = 0.15\n"
      "averaged_rd_zy_given_x = -10\n"
      "averaged_rd_zw_given_x = 0.11\n");
  const SensitivityResult r = positive_control_adjust(s, 0.0, 0.0);
  const double threshold = explain_away_threshold(s);
  c.detail << " gamma2=" << r.gamma2 << " gamma1=" << r.gamma1 << " threshold=" << threshold;
  c.check(std::abs(r.gamma2 - (-10.0 / 0.11)) < 1e-9, "gamma2");
  c.check(std::abs(r.gamma1 - (-150.0 - r.gamma2 * 0.15)) < 1e-9 && std::abs(r.gamma1 + 136.36) < 0.01, "gamma1");
  c.check(std::abs(threshold + 1.5) <= 0.01, "threshold");
  report(c, "positive control example");
}

void criterion8() {
  Criterion c{8};
  const CounterexampleReport r = counterexample_check();
  c.detail << " analytic error=" << r.analytic_error << " max |z|=" << r.max_z;
  c.check(r.analytic_error <= 1e-10, "analytic");
  c.check(r.empirical_pass, "empirical");
  report(c, "counterexample covariance");
}

void criterion9() {
  Criterion c{9};
  std::mt19937_64 rng(kSeed + 9);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const oracle::BinaryUModel m = oracle::random_model(rng);
    const AdjustmentResult r = binary_nc_adjust(m.summary(), true);
    worst = std::max(worst, std::abs(r.ace - m.true_ace()));
  }
  c.detail << " max gap=" << worst;
  c.check(worst <= 1e-10, "oracle");
  report(c, "adjustment formula against enumeration oracle");
}

void criterion10() {
  Criterion c{10};
  std::mt19937_64 rng(kSeed + 10);
  const NCDataset d = generate_binary_exposure({Scenario::binary_exposure, 0.5, 0.6, 500}, rng);
  const BridgePair pair = builtin_bridges(BuiltinBridge::binary_interaction);
  const MomentSpec spec(pair.bridge, pair.instruments, Contrast{});
  std::normal_distribution<double> normal;
  double jac_gap = 0.0;
  for (int k = 0; k < 5; ++k) {
    Vector theta(spec.theta_dim());
    for (Index j = 0; j < theta.size(); ++j) theta[j] = normal(rng);
    jac_gap = std::max(jac_gap,
                       (moment_jacobian(spec, d, theta) - moment_jacobian_numeric(spec, d, theta)).cwiseAbs().maxCoeff());
  }
  const GmmFit fit = gmm_fit(spec, d);
  const bool hac_equal = hac_variance(spec, d, fit, HacConfig::fixed(0)) == fit.var_iid;
  Matrix h(3, 1);
  h << 1, 2, 3;
  const double scalar = long_run_covariance(h, 1)(0, 0);
  c.detail << " jacobian gap=" << jac_gap << " hac0==sandwich=" << (hac_equal ? "yes" : "no")
           << " scalar=" << scalar;
  c.check(jac_gap <= 1e-6, "jacobian");
  c.check(hac_equal, "hac b=0");
  c.check(std::abs(scalar - 22.0 / 3.0) <= 1e-12, "22/3");
  report(c, "numerical checks");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void criterion11() {
  Criterion c{11};
#ifdef NC_CLI_PATH
  const std::filesystem::path dir = std::filesystem::path(NCBRIDGE_TEST_TMP) / "acceptance_determinism";
  std::filesystem::create_directories(dir);
  std::vector<std::string> reports, csvs;
  int k = 0;
  for (const char* threads : {"1", "1", "4", "4"}) {
    const auto json = dir / ("run" + std::to_string(k) + ".json");
    const auto csv = dir / ("run" + std::to_string(k) + ".csv");
    ++k;
    const std::string cmd = std::string("\"") + NC_CLI_PATH +
                            "\" simulate --scenario binary_exposure --eta 0 0.5 --xi 0.6 --n 300 --reps 40 "
                            "--seed 77 --ipw-bootstrap 20 --format machine --threads " +
                            threads + " -o \"" + json.string() + "\" --replicates-csv \"" + csv.string() + "\"";
    const int status = std::system(cmd.c_str());
    c.check(status == 0, std::string("cli run with ") + threads + " threads");
    reports.push_back(slurp(json));
    csvs.push_back(slurp(csv));
  }
  bool same = !reports[0].empty() && !csvs[0].empty();
  for (std::size_t j = 1; j < reports.size(); ++j) same = same && reports[j] == reports[0] && csvs[j] == csvs[0];
  c.detail << " report bytes=" << reports[0].size() << " identical=" << (same ? "yes" : "no");
  c.check(same, "identical files");
#else
  c.check(false, "command-line tool not built");
#endif
  report(c, "simulate determinism, serial and parallel");
}

}  // namespace

int main() {
  std::cout.precision(6);
  const std::vector<void (*)()> criteria{criterion1, criterion2, criterion3, criterion4, criterion5, criterion6,
                                         criterion7, criterion8, criterion9, criterion10, criterion11};
  for (auto run : criteria) {
    try {
      run();
    } catch (const std::exception& e) {
      std::cout << "FAIL criterion (exception): " << e.what() << std::endl;
      ++failures;
    }
  }
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
