#pragma once

#include "ncbridge/estimators.hpp"
#include "ncbridge/simulation.hpp"
#include "ncbridge/summary.hpp"
#include "ncbridge/timeseries.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace ncbridge {

/// Point estimate with its 95% normal interval and two-sided p-value.
struct EstimateReport {
  std::string method;
  std::string parameter;
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double p_value = 0.0;
  Index n = 0;
  std::optional<Index> hac_bandwidth;
  std::vector<std::string> labels;  // full parameter vector, GMM only
  std::vector<double> theta;
  std::vector<double> std_errors;
  std::vector<std::string> warnings;
};
EstimateReport make_estimate_report(const EstimateWithSE& e, const std::string& parameter, Index n);
EstimateReport make_estimate_report(const GmmFit& fit, const std::string& parameter);

/// Machine format is JSON; non-finite numbers are written as null and read
/// back as NaN, finite doubles round-trip exactly.
std::string to_json(const EstimateReport& r);
std::string to_json(const SeriesReport& r);
std::string to_json(const AdjustmentResult& r, bool interaction);
std::string to_json(const SensitivityResult& r, std::optional<double> threshold);
std::string to_json(const CounterexampleReport& r);
std::string to_json(const SimulationReport& r);
std::string to_json(const std::vector<SimulationReport>& grid);

EstimateReport estimate_report_from_json(const std::string& text);
SimulationReport simulation_report_from_json(const std::string& text);
std::vector<SimulationReport> simulation_grid_from_json(const std::string& text);

std::string format_table(const EstimateReport& r);
/// Ordinary least squares / confounding test / negative control sections with
/// estimate, [95% CI] and p-value; numbers multiplied by `scale`.
std::string format_table(const SeriesReport& r, double scale = 1.0);
std::string format_table(const AdjustmentResult& r, bool interaction);
std::string format_table(const SensitivityResult& r, std::optional<double> threshold);
std::string format_table(const CounterexampleReport& r);
std::string format_table(const SimulationReport& r);
/// Coverage of the negative control interval: rows xi, columns eta x n.
std::string format_coverage_grid(const std::vector<SimulationReport>& grid);

/// One row per replication and estimator: replication, estimator, estimate,
/// std_error, ok.
void write_replicates_csv(std::ostream& out, const SimulationReport& r);
void write_replicates_csv(std::ostream& out, const std::vector<SimulationReport>& grid);

}  // namespace ncbridge
