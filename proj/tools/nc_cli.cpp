#include "ncbridge/bridge.hpp"
#include "ncbridge/data.hpp"
#include "ncbridge/errors.hpp"
#include "ncbridge/estimators.hpp"
#include "ncbridge/gmm.hpp"
#include "ncbridge/report.hpp"
#include "ncbridge/simulation.hpp"
#include "ncbridge/summary.hpp"
#include "ncbridge/timeseries.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

using namespace ncbridge;

namespace {

enum Exit { kOk = 0, kUsage = 1, kStatistical = 2, kIo = 3 };

struct Output {
  std::string format = "table";
  std::string path;

  bool machine() const { return format == "machine"; }

  void emit(const std::string& text) const {
    if (path.empty()) {
      std::cout << text;
      return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << text;
    if (!out) throw DataError("failed writing " + path);
  }
};

void add_output(CLI::App* cmd, Output& out) {
  cmd->add_option("--format", out.format, "table or machine (JSON)")
      ->check(CLI::IsMember({"table", "machine"}));
  cmd->add_option("-o,--output", out.path, "write the report here instead of stdout");
}

struct EstimateArgs {
  std::string data;
  ColumnMap columns;
  std::vector<std::string> sqrt_columns;
  std::string method = "gmm";
  std::string bridge = "linear_additive";
  std::string parameter;
  std::optional<Index> hac;
  Output out;
};

int run_estimate(const EstimateArgs& a) {
  ColumnMap columns = a.columns;
  columns.sqrt_columns.insert(a.sqrt_columns.begin(), a.sqrt_columns.end());
  const NCDataset data = read_csv(a.data, columns);
  EstimateReport report;
  if (a.method == "gmm") {
    const std::filesystem::path file(a.bridge);
    const MomentSpec spec = std::filesystem::is_regular_file(file) ? load_moment_spec(file, data.p()) : [&] {
      auto pair = builtin_bridges(a.bridge, data.p());
      std::optional<Contrast> contrast;
      if (a.bridge == "binary_interaction") contrast = Contrast{};
      return MomentSpec(std::move(pair.bridge), std::move(pair.instruments), contrast);
    }();
    GmmOptions options;
    if (a.hac) options.hac = HacConfig::fixed(*a.hac);
    const GmmFit fit = gmm_fit(spec, data, options);
    std::string parameter = a.parameter;
    if (parameter.empty()) {
      parameter = std::find(fit.labels.begin(), fit.labels.end(), "ace") != fit.labels.end() ? "ace" : "x";
    }
    report = make_estimate_report(fit, parameter);
  } else {
    if (a.hac) throw InvalidArgument("--hac applies to --method gmm only");
    EstimateWithSE e;
    if (a.method == "nc") {
      e = nc_estimate(data);
    } else if (a.method == "tsls") {
      e = nc_tsls(data);
    } else if (a.method == "iv") {
      e = iv_estimate(data, all_controls(data));
    } else {
      e = ols_estimate(data, all_controls(data));
    }
    report = make_estimate_report(e, "x", data.n());
  }
  a.out.emit(a.out.machine() ? to_json(report) : format_table(report));
  return kOk;
}

struct SeriesArgs {
  std::string data;
  std::string x = "x";
  std::string y = "y";
  std::vector<std::string> covariates;
  Index lag = 1;
  Index exposure_lags = 1;
  std::optional<int> harmonics;
  double period = 365.0;
  bool sqrt_outcome = false;
  std::optional<Index> hac;
  double scale = 1.0;
  Output out;
};

int run_timeseries(const SeriesArgs& a) {
  if (a.lag < 1) throw InvalidArgument("--lag must be at least 1");
  if (a.exposure_lags < 0) throw InvalidArgument("--exposure-lags must be non-negative");
  SeriesFrame frame = read_series_csv(a.data, a.x, a.y, a.covariates, a.sqrt_outcome);
  frame.lag = a.lag;
  frame.exposure_lags = a.exposure_lags;
  if (a.harmonics) frame.trend = trend_basis(frame.length(), *a.harmonics, a.period);
  const HacConfig hac = a.hac ? HacConfig::fixed(*a.hac) : HacConfig::rule();
  const SeriesReport report = analyze_series(frame, hac);
  a.out.emit(a.out.machine() ? to_json(report) : format_table(report, a.scale));
  return kOk;
}

struct SimulateArgs {
  std::string scenario = "binary_exposure";
  std::vector<double> eta{0.5};
  std::vector<double> xi{0.6};
  std::vector<Index> n{500};
  int reps = 1000;
  std::uint64_t seed = 0;
  std::vector<std::string> estimators;
  int ipw_bootstrap = 200;
  unsigned threads = 0;
  std::string replicates_csv;
  Output out;
};

int run_simulate(const SimulateArgs& a) {
  const Scenario scenario = parse_scenario(a.scenario);
  std::vector<Estimator> estimators;
  for (const auto& e : a.estimators) estimators.push_back(parse_estimator(e));
  if (estimators.empty()) estimators = default_estimators(scenario);
  StudyOptions options;
  options.ipw_bootstrap = a.ipw_bootstrap;
  options.threads = a.threads;

  std::vector<SimulationReport> grid;
  for (double xi : a.xi) {
    for (double eta : a.eta) {
      for (Index n : a.n) {
        DgpConfig cfg{scenario, eta, xi, n};
        grid.push_back(run_study(cfg, estimators, a.reps, a.seed, options));
      }
    }
  }
  if (!a.replicates_csv.empty()) {
    std::ofstream csv(a.replicates_csv);
    if (!csv) throw DataError("cannot write " + a.replicates_csv);
    write_replicates_csv(csv, grid);
  }
  if (a.out.machine()) {
    a.out.emit(grid.size() == 1 ? to_json(grid.front()) : to_json(grid));
  } else {
    std::string text;
    if (grid.size() > 1) text = format_coverage_grid(grid) + "\n";
    for (const auto& r : grid) text += format_table(r) + "\n";
    a.out.emit(text);
  }
  return kOk;
}

struct SummaryArgs {
  std::string file;
  bool interaction = false;
  bool positive_control = false;
  std::vector<double> range;
  Output out;
};

int run_summary(const SummaryArgs& a) {
  if (!a.range.empty() && !a.positive_control) throw InvalidArgument("--ace-xw-range needs --positive-control");
  if (a.positive_control && a.interaction) throw InvalidArgument("--interaction and --positive-control exclude each other");
  if (a.positive_control && a.range.size() == 2 && a.range[0] > a.range[1]) {
    throw InvalidArgument("--ace-xw-range needs a <= b");
  }
  const RiskDifferenceSummary summary = read_summary_file(a.file);
  if (a.positive_control) {
    const double lo = a.range.empty() ? 0.0 : a.range[0];
    const double hi = a.range.empty() ? 0.0 : a.range[1];
    const SensitivityResult r = positive_control_adjust(summary, lo, hi);
    std::optional<double> threshold;
    if (r.gamma2 != 0.0) threshold = explain_away_threshold(summary);
    a.out.emit(a.out.machine() ? to_json(r, threshold) : format_table(r, threshold));
  } else {
    const AdjustmentResult r = binary_nc_adjust(summary, a.interaction);
    a.out.emit(a.out.machine() ? to_json(r, a.interaction) : format_table(r, a.interaction));
  }
  return kOk;
}

struct CounterexampleArgs {
  std::uint64_t seed = 20240101;
  Index n = 1000000;
  Output out;
};

int run_counterexample(const CounterexampleArgs& a) {
  if (a.n < 2) throw InvalidArgument("--n must be at least 2");
  const CounterexampleReport r = counterexample_check(a.seed, a.n);
  a.out.emit(a.out.machine() ? to_json(r) : format_table(r));
  return r.pass() ? kOk : kStatistical;
}

struct GenerateArgs {
  std::string scenario = "structural_continuous";
  double eta = 0.0;
  double xi = 0.0;
  Index n = 500;
  std::uint64_t seed = 0;
  std::string path;
};

int run_generate(const GenerateArgs& a) {
  DgpConfig cfg{parse_scenario(a.scenario), a.eta, a.xi, a.n};
  std::mt19937_64 rng(replication_seed(a.seed, 0));
  const auto data = generate(cfg, rng);
  if (const auto* d = std::get_if<NCDataset>(&data)) {
    ColumnMap columns;
    columns.v = {"v"};
    write_csv(*d, a.path, columns);
    return kOk;
  }
  const auto& frame = std::get<SeriesFrame>(data);
  std::ofstream out(a.path);
  if (!out) throw DataError("cannot write " + a.path);
  out << std::setprecision(17) << "x,y,v\n";
  for (Index i = 0; i < frame.length(); ++i) {
    out << frame.x[i] << ',' << frame.y[i] << ',' << frame.covariates(i, 0) << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Negative control estimation, sensitivity analysis and simulation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "nc 0.1.0");

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "Estimate an effect from a CSV dataset");
  estimate->add_option("--data", est.data, "CSV file with a header row")->required();
  estimate->add_option("--x", est.columns.x, "exposure column")->required();
  estimate->add_option("--y", est.columns.y, "outcome column")->required();
  estimate->add_option("--z", est.columns.z, "negative control exposure column")->required();
  estimate->add_option("--w", est.columns.w, "negative control outcome column")->required();
  estimate->add_option("--v", est.columns.v, "covariate column (repeatable)");
  estimate->add_option("--sqrt", est.sqrt_columns, "square-root this column at ingestion (repeatable)");
  estimate->add_option("--method", est.method, "gmm, nc, iv, ols or tsls")
      ->check(CLI::IsMember({"gmm", "nc", "iv", "ols", "tsls"}));
  estimate->add_option("--bridge", est.bridge, "builtin bridge name or a bridge spec file");
  estimate->add_option("--parameter", est.parameter, "reported GMM parameter (default ace or x)");
  estimate->add_option("--hac", est.hac, "Newey-West bandwidth for the GMM variance");
  add_output(estimate, est.out);

  SeriesArgs ser;
  auto* timeseries = app.add_subcommand("timeseries", "OLS, confounding test and NC estimation for a series");
  timeseries->add_option("--data", ser.data, "CSV file, rows in time order")->required();
  timeseries->add_option("--x", ser.x, "exposure column");
  timeseries->add_option("--y", ser.y, "outcome column");
  timeseries->add_option("--covariate", ser.covariates, "covariate column, lagged with the outcome (repeatable)");
  timeseries->add_option("--lag", ser.lag, "negative control lag k");
  timeseries->add_option("--exposure-lags", ser.exposure_lags, "number of lagged exposures controlled");
  timeseries->add_option("--trend-harmonics", ser.harmonics, "add a polynomial trend with this many Fourier pairs")
      ->check(CLI::NonNegativeNumber);
  timeseries->add_option("--period", ser.period, "seasonal period of the trend basis");
  timeseries->add_flag("--sqrt-outcome", ser.sqrt_outcome, "square-root the outcome");
  timeseries->add_option("--hac", ser.hac, "Newey-West bandwidth (default floor(1.3 n^(1/3)))");
  timeseries->add_option("--scale", ser.scale, "multiply reported numbers (e.g. 10000)");
  add_output(timeseries, ser.out);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study of the simulation scenarios");
  simulate->add_option("--scenario", sim.scenario, "binary_exposure, structural_continuous or timeseries");
  simulate->add_option("--eta", sim.eta, "confounding strength (several values give a grid)")->expected(1, -1);
  simulate->add_option("--xi", sim.xi, "scenario parameter xi (several values give a grid)")->expected(1, -1);
  simulate->add_option("--n", sim.n, "sample size (several values give a grid)")->expected(1, -1);
  simulate->add_option("--reps", sim.reps, "replications per cell")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sim.seed, "master seed")->required();
  simulate->add_option("--estimators", sim.estimators, "nc, ols, ipw, iv, lagged_ols")->delimiter(',');
  simulate->add_option("--ipw-bootstrap", sim.ipw_bootstrap, "bootstrap draws for the IPW standard error")
      ->check(CLI::NonNegativeNumber);
  simulate->add_option("--threads", sim.threads, "worker threads (default NC_THREADS or all cores)");
  simulate->add_option("--replicates-csv", sim.replicates_csv, "write per-replication estimates here");
  add_output(simulate, sim.out);

  SummaryArgs sum;
  auto* summary = app.add_subcommand("summary", "Adjustment from summary risk differences");
  summary->add_option("--summary-file", sum.file, "key = value risk difference file")->required();
  summary->add_flag("--interaction", sum.interaction, "bridge with an X*W interaction");
  summary->add_flag("--positive-control", sum.positive_control, "W is a positive control outcome");
  summary->add_option("--ace-xw-range", sum.range, "range [a, b] of ACE_XW")->expected(2);
  add_output(summary, sum.out);

  CounterexampleArgs cex;
  auto* counterexample = app.add_subcommand("counterexample", "Two models with the same observed covariance");
  counterexample->add_option("--seed", cex.seed, "seed of the empirical check");
  counterexample->add_option("--n", cex.n, "sample size of the empirical check");
  add_output(counterexample, cex.out);

  GenerateArgs gen;
  auto* generate_cmd = app.add_subcommand("generate", "Write one simulated dataset as CSV");
  generate_cmd->add_option("--scenario", gen.scenario, "binary_exposure, structural_continuous or timeseries");
  generate_cmd->add_option("--eta", gen.eta, "confounding strength");
  generate_cmd->add_option("--xi", gen.xi, "scenario parameter xi");
  generate_cmd->add_option("--n", gen.n, "sample size or series length");
  generate_cmd->add_option("--seed", gen.seed, "seed")->required();
  generate_cmd->add_option("-o,--output", gen.path, "CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*estimate) return run_estimate(est);
    if (*timeseries) return run_timeseries(ser);
    if (*simulate) return run_simulate(sim);
    if (*summary) return run_summary(sum);
    if (*counterexample) return run_counterexample(cex);
    if (*generate_cmd) return run_generate(gen);
  } catch (const InvalidArgument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const StatisticalError& e) {
    std::cerr << "statistical error: " << e.what() << "\n";
    return kStatistical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStatistical;
  }
  return kUsage;
}
