#include "ncbridge/report.hpp"

#include "ncbridge/errors.hpp"
#include "ncbridge/inference.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace ncbridge {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double get_num(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("report is missing field '") + key + "'");
  if (it->is_null()) return kNaN;
  if (!it->is_number()) throw DataError(std::string("report field '") + key + "' is not a number");
  return it->get<double>();
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

std::string fmt(double v, int precision = 4) {
  if (!std::isfinite(v)) return "NA";
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << v;
  return out.str();
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string padr(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

json estimate_json(const EstimateWithSE& e) {
  const Interval ci = confidence_interval(e.value, e.variance());
  return {{"method", e.method},     {"estimate", num(e.value)}, {"std_error", num(e.std_error)},
          {"ci_lo", num(ci.lo)},    {"ci_hi", num(ci.hi)},      {"p_value", num(p_value(e.value, e.variance()))},
          {"warnings", e.warnings}};
}

json config_json(const DgpConfig& c) {
  return {{"scenario", std::string(to_string(c.scenario))},
          {"eta", c.eta},
          {"xi", c.xi},
          {"n", c.n},
          {"sigma_uv", c.sigma_uv}};
}

json simulation_json(const SimulationReport& r) {
  json summaries = json::array();
  for (const auto& s : r.summaries) {
    summaries.push_back({{"estimator", std::string(to_string(s.estimator))},
                         {"converged", s.converged},
                         {"failed", s.failed},
                         {"mean", num(s.mean)},
                         {"bias", num(s.bias)},
                         {"sd", num(s.sd)},
                         {"mean_se", num(s.mean_se)},
                         {"coverage", num(s.coverage)}});
  }
  json replicates = json::array();
  for (std::size_t k = 0; k < r.replicates.size(); ++k) {
    json rows = json::array();
    for (const auto& o : r.replicates[k]) {
      json row = {{"estimate", num(o.estimate)}, {"std_error", num(o.std_error)}, {"ok", o.ok}};
      if (!o.failure.empty()) row["failure"] = o.failure;
      rows.push_back(std::move(row));
    }
    replicates.push_back(std::move(rows));
  }
  return {{"config", config_json(r.config)},
          {"replications", r.replications},
          {"seed", r.seed},
          {"truth", r.truth},
          {"summaries", std::move(summaries)},
          {"replicates", std::move(replicates)}};
}

SimulationReport simulation_from(const json& j) {
  try {
    SimulationReport r;
    const json& c = j.at("config");
    r.config.scenario = parse_scenario(c.at("scenario").get<std::string>());
    r.config.eta = get_num(c, "eta");
    r.config.xi = get_num(c, "xi");
    r.config.n = c.at("n").get<Index>();
    r.config.sigma_uv = get_num(c, "sigma_uv");
    r.replications = j.at("replications").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.truth = get_num(j, "truth");
    for (const auto& s : j.at("summaries")) {
      EstimatorSummary e;
      e.estimator = parse_estimator(s.at("estimator").get<std::string>());
      e.converged = s.at("converged").get<Index>();
      e.failed = s.at("failed").get<Index>();
      e.mean = get_num(s, "mean");
      e.bias = get_num(s, "bias");
      e.sd = get_num(s, "sd");
      e.mean_se = get_num(s, "mean_se");
      e.coverage = get_num(s, "coverage");
      r.summaries.push_back(e);
    }
    for (const auto& rows : j.at("replicates")) {
      std::vector<ReplicateOutcome> out;
      for (const auto& row : rows) {
        ReplicateOutcome o;
        o.estimate = get_num(row, "estimate");
        o.std_error = get_num(row, "std_error");
        o.ok = row.at("ok").get<bool>();
        if (row.contains("failure")) o.failure = row.at("failure").get<std::string>();
        out.push_back(std::move(o));
      }
      r.replicates.push_back(std::move(out));
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed simulation report: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("malformed simulation report: ") + e.what());
  }
}

std::string series_line(const std::string& name, const EstimateWithSE& e, double p, double scale) {
  const Interval ci = confidence_interval(e.value, e.variance());
  return "  " + padr(name, 12) + pad(fmt(scale * e.value), 12) + "  [" + fmt(scale * ci.lo) + ", " +
         fmt(scale * ci.hi) + "]  p = " + fmt(p) + "\n";
}

}  // namespace

EstimateReport make_estimate_report(const EstimateWithSE& e, const std::string& parameter, Index n) {
  EstimateReport r;
  r.method = e.method;
  r.parameter = parameter;
  r.estimate = e.value;
  r.std_error = e.std_error;
  if (std::isnan(e.std_error)) {
    r.ci_lo = r.ci_hi = r.p_value = std::numeric_limits<double>::quiet_NaN();
  } else {
    const Interval ci = confidence_interval(e.value, e.variance());
    r.ci_lo = ci.lo;
    r.ci_hi = ci.hi;
    r.p_value = p_value(e.value, e.variance());
  }
  r.n = n;
  r.warnings = e.warnings;
  return r;
}

EstimateReport make_estimate_report(const GmmFit& fit, const std::string& parameter) {
  const Index j = fit.index_of(parameter);
  EstimateWithSE e{fit.theta[j], fit.std_error(j), "gmm", {}};
  if (!fit.converged) e.warnings.push_back("GMM optimizer did not converge");
  EstimateReport r = make_estimate_report(e, parameter, fit.n);
  r.hac_bandwidth = fit.hac_bandwidth;
  r.labels = fit.labels;
  for (Index k = 0; k < fit.theta.size(); ++k) {
    r.theta.push_back(fit.theta[k]);
    r.std_errors.push_back(fit.std_error(k));
  }
  return r;
}

std::string to_json(const EstimateReport& r) {
  json j = {{"method", r.method},   {"parameter", r.parameter},  {"estimate", num(r.estimate)},
            {"std_error", num(r.std_error)}, {"ci_lo", num(r.ci_lo)}, {"ci_hi", num(r.ci_hi)},
            {"p_value", num(r.p_value)},     {"n", r.n},            {"warnings", r.warnings}};
  j["hac_bandwidth"] = r.hac_bandwidth ? json(*r.hac_bandwidth) : json(nullptr);
  if (!r.labels.empty()) {
    json params = json::array();
    for (std::size_t k = 0; k < r.labels.size(); ++k) {
      params.push_back({{"label", r.labels[k]}, {"value", num(r.theta[k])}, {"std_error", num(r.std_errors[k])}});
    }
    j["parameters"] = std::move(params);
  }
  return j.dump(2) + "\n";
}

EstimateReport estimate_report_from_json(const std::string& text) {
  const json j = parse_json(text);
  try {
    EstimateReport r;
    r.method = j.at("method").get<std::string>();
    r.parameter = j.at("parameter").get<std::string>();
    r.estimate = get_num(j, "estimate");
    r.std_error = get_num(j, "std_error");
    r.ci_lo = get_num(j, "ci_lo");
    r.ci_hi = get_num(j, "ci_hi");
    r.p_value = get_num(j, "p_value");
    r.n = j.at("n").get<Index>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    if (!j.at("hac_bandwidth").is_null()) r.hac_bandwidth = j.at("hac_bandwidth").get<Index>();
    if (j.contains("parameters")) {
      for (const auto& p : j.at("parameters")) {
        r.labels.push_back(p.at("label").get<std::string>());
        r.theta.push_back(get_num(p, "value"));
        r.std_errors.push_back(get_num(p, "std_error"));
      }
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed estimate report: ") + e.what());
  }
}

std::string to_json(const SeriesReport& r) {
  json confounding = {{"alpha1", estimate_json(r.confounding.alpha1)},
                      {"alpha2", estimate_json(r.confounding.alpha2)},
                      {"p_alpha1", num(r.confounding.p_alpha1)},
                      {"p_alpha2", num(r.confounding.p_alpha2)}};
  json j = {{"rows", r.rows},
            {"hac_bandwidth", r.bandwidth},
            {"covariates", r.covariate_names},
            {"ordinary_least_squares", estimate_json(r.ols)},
            {"confounding_test", std::move(confounding)},
            {"negative_control", estimate_json(r.nc)}};
  return j.dump(2) + "\n";
}

std::string to_json(const AdjustmentResult& r, bool interaction) {
  json j = {{"bridge", interaction ? "interaction" : "additive"},
            {"ace", num(r.ace)},
            {"gamma2", num(r.gamma2)},
            {"gamma3", num(r.gamma3)}};
  return j.dump(2) + "\n";
}

std::string to_json(const SensitivityResult& r, std::optional<double> threshold) {
  json j = {{"gamma1", num(r.gamma1)}, {"gamma2", num(r.gamma2)}, {"bound", {num(r.lo), num(r.hi)}}};
  j["explain_away_threshold"] = threshold ? num(*threshold) : json(nullptr);
  return j.dump(2) + "\n";
}

std::string to_json(const CounterexampleReport& r) {
  auto mat = [](const Matrix& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
      json row = json::array();
      for (Index k = 0; k < m.cols(); ++k) row.push_back(num(m(i, k)));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  json settings = json::array();
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& s = r.settings[k];
    settings.push_back({{"beta", s.beta},
                        {"alpha", s.alpha},
                        {"sigma2", s.sigma2},
                        {"analytic", mat(r.analytic[k])},
                        {"empirical", mat(r.empirical[k].covariance)},
                        {"mc_se", mat(r.empirical[k].mc_se)}});
  }
  json j = {{"target", mat(r.target)},
            {"settings", std::move(settings)},
            {"perturbed_beta_0_9", mat(r.perturbed)},
            {"analytic_error", num(r.analytic_error)},
            {"max_z", num(r.max_z)},
            {"analytic_pass", r.analytic_pass},
            {"empirical_pass", r.empirical_pass},
            {"perturbation_detected", r.perturbation_detected},
            {"pass", r.pass()}};
  return j.dump(2) + "\n";
}

std::string to_json(const SimulationReport& r) { return simulation_json(r).dump(2) + "\n"; }

std::string to_json(const std::vector<SimulationReport>& grid) {
  json j = json::array();
  for (const auto& r : grid) j.push_back(simulation_json(r));
  return j.dump(2) + "\n";
}

SimulationReport simulation_report_from_json(const std::string& text) { return simulation_from(parse_json(text)); }

std::vector<SimulationReport> simulation_grid_from_json(const std::string& text) {
  const json j = parse_json(text);
  if (!j.is_array()) throw DataError("simulation grid report must be a JSON array");
  std::vector<SimulationReport> out;
  for (const auto& r : j) out.push_back(simulation_from(r));
  return out;
}

std::string format_table(const EstimateReport& r) {
  std::ostringstream out;
  out << "method      " << r.method << "\n"
      << "parameter   " << r.parameter << "\n"
      << "n           " << r.n << "\n";
  if (r.hac_bandwidth) out << "HAC lags    " << *r.hac_bandwidth << "\n";
  out << "estimate    " << fmt(r.estimate, 6) << "\n"
      << "std. error  " << fmt(r.std_error, 6) << "\n"
      << "95% CI      [" << fmt(r.ci_lo, 6) << ", " << fmt(r.ci_hi, 6) << "]\n"
      << "p-value     " << fmt(r.p_value, 4) << "\n";
  if (!r.labels.empty()) {
    out << "\n" << padr("parameter", 14) << pad("value", 12) << pad("std.err", 12) << "\n";
    for (std::size_t k = 0; k < r.labels.size(); ++k) {
      out << padr(r.labels[k], 14) << pad(fmt(r.theta[k]), 12) << pad(fmt(r.std_errors[k]), 12) << "\n";
    }
  }
  for (const auto& w : r.warnings) out << "warning: " << w << "\n";
  return out.str();
}

std::string format_table(const SeriesReport& r, double scale) {
  std::ostringstream out;
  out << "rows " << r.rows << ", Newey-West lags " << r.bandwidth;
  if (scale != 1.0) out << ", values x " << scale;
  out << "\n\nOrdinary least squares\n"
      << series_line("X", r.ols, p_value(r.ols.value, r.ols.variance()), scale)
      << "\nConfounding test\n"
      << series_line("alpha1 (X)", r.confounding.alpha1, r.confounding.p_alpha1, scale)
      << series_line("alpha2 (Z)", r.confounding.alpha2, r.confounding.p_alpha2, scale)
      << "\nNegative control estimation\n"
      << series_line("X", r.nc, p_value(r.nc.value, r.nc.variance()), scale);
  for (const auto& w : r.nc.warnings) out << "warning: " << w << "\n";
  return out.str();
}

std::string format_table(const AdjustmentResult& r, bool interaction) {
  std::ostringstream out;
  out << "bridge   " << (interaction ? "interaction" : "additive") << "\n"
      << "gamma2   " << fmt(r.gamma2, 6) << "\n";
  if (interaction) out << "gamma3   " << fmt(r.gamma3, 6) << "\n";
  out << "ACE      " << fmt(r.ace, 6) << "\n";
  return out.str();
}

std::string format_table(const SensitivityResult& r, std::optional<double> threshold) {
  std::ostringstream out;
  out << "gamma1   " << fmt(r.gamma1, 6) << "\n"
      << "gamma2   " << fmt(r.gamma2, 6) << "\n"
      << "ACE_XY = " << fmt(r.gamma1, 6) << (r.gamma2 < 0 ? " - " : " + ") << fmt(std::abs(r.gamma2), 6)
      << " * ACE_XW\n"
      << "bound    [" << fmt(r.lo, 6) << ", " << fmt(r.hi, 6) << "]\n";
  if (threshold) out << "explain-away ACE_XW  " << fmt(*threshold, 6) << "\n";
  return out.str();
}

std::string format_table(const CounterexampleReport& r) {
  auto print = [](std::ostream& out, const Matrix& m) {
    for (Index i = 0; i < m.rows(); ++i) {
      out << "   ";
      for (Index k = 0; k < m.cols(); ++k) out << pad(fmt(m(i, k), 6), 12);
      out << "\n";
    }
  };
  std::ostringstream out;
  out << "covariance of (X, Y, W)\n";
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& s = r.settings[k];
    out << "\nsetting " << k + 1 << ": beta = " << fmt(s.beta, 4) << ", alpha = (" << fmt(s.alpha[0]) << ", "
        << fmt(s.alpha[1]) << ", " << fmt(s.alpha[2]) << "), sigma^2 = (" << fmt(s.sigma2[0]) << ", "
        << fmt(s.sigma2[1]) << ", " << fmt(s.sigma2[2]) << ")\n analytic\n";
    print(out, r.analytic[k]);
    out << " empirical\n";
    print(out, r.empirical[k].covariance);
  }
  out << "\nsetting 1 with beta = 0.9\n";
  print(out, r.perturbed);
  out << "\nanalytic max error " << r.analytic_error << (r.analytic_pass ? "  PASS" : "  FAIL") << "\n"
      << "empirical max |z|  " << fmt(r.max_z, 3) << (r.empirical_pass ? "  PASS" : "  FAIL") << "\n"
      << "perturbation detected " << (r.perturbation_detected ? "yes  PASS" : "no  FAIL") << "\n"
      << (r.pass() ? "PASS" : "FAIL") << "\n";
  return out.str();
}

std::string format_table(const SimulationReport& r) {
  std::ostringstream out;
  out << to_string(r.config.scenario) << ": eta = " << r.config.eta << ", xi = " << r.config.xi
      << ", n = " << r.config.n << ", replications = " << r.replications << ", seed = " << r.seed
      << ", truth = " << r.truth << "\n\n"
      << padr("estimator", 12) << pad("mean", 10) << pad("bias", 10) << pad("sd", 10) << pad("mean se", 10)
      << pad("coverage", 10) << pad("failed", 8) << "\n";
  for (const auto& s : r.summaries) {
    out << padr(std::string(to_string(s.estimator)), 12) << pad(fmt(s.mean), 10) << pad(fmt(s.bias), 10)
        << pad(fmt(s.sd), 10) << pad(fmt(s.mean_se), 10) << pad(fmt(s.coverage, 3), 10)
        << pad(std::to_string(s.failed), 8) << "\n";
  }
  return out.str();
}

std::string format_coverage_grid(const std::vector<SimulationReport>& grid) {
  if (grid.empty()) return {};
  std::set<double, std::greater<>> xis;
  std::vector<double> etas;
  std::set<Index> ns;
  std::map<std::tuple<double, double, Index>, double> cell;
  for (const auto& r : grid) {
    xis.insert(r.config.xi);
    if (std::find(etas.begin(), etas.end(), r.config.eta) == etas.end()) etas.push_back(r.config.eta);
    ns.insert(r.config.n);
    double cov = kNaN;
    for (const auto& s : r.summaries) {
      if (s.estimator == Estimator::nc) cov = s.coverage;
    }
    cell[{r.config.xi, r.config.eta, r.config.n}] = cov;
  }
  std::ostringstream out;
  out << "coverage of the 95% negative control interval, " << to_string(grid.front().config.scenario) << "\n\n"
      << padr("", 10);
  const std::size_t width = 8 * ns.size() + 2;
  for (double eta : etas) out << padr("  eta = " + fmt(eta, 1), width);
  out << "\n" << padr("", 10);
  for (std::size_t e = 0; e < etas.size(); ++e) {
    out << "  ";
    for (Index n : ns) out << pad("n=" + std::to_string(n), 8);
  }
  out << "\n";
  for (double xi : xis) {
    out << padr("xi = " + fmt(xi, 1), 10);
    for (double eta : etas) {
      out << "  ";
      for (Index n : ns) {
        const auto it = cell.find({xi, eta, n});
        out << pad(it == cell.end() ? "" : fmt(it->second, 3), 8);
      }
    }
    out << "\n";
  }
  return out.str();
}

void write_replicates_csv(std::ostream& out, const SimulationReport& r) {
  write_replicates_csv(out, std::vector<SimulationReport>{r});
}

void write_replicates_csv(std::ostream& out, const std::vector<SimulationReport>& grid) {
  out << "scenario,eta,xi,n,replication,estimator,estimate,std_error,ok\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : grid) {
    for (std::size_t k = 0; k < r.summaries.size(); ++k) {
      const auto& rows = r.replicates[k];
      for (std::size_t i = 0; i < rows.size(); ++i) {
        out << to_string(r.config.scenario) << ',' << r.config.eta << ',' << r.config.xi << ',' << r.config.n << ','
            << i << ',' << to_string(r.summaries[k].estimator) << ',';
        if (std::isfinite(rows[i].estimate)) out << rows[i].estimate;
        out << ',';
        if (std::isfinite(rows[i].std_error)) out << rows[i].std_error;
        out << ',' << (rows[i].ok ? 1 : 0) << '\n';
      }
    }
  }
}

}  // namespace ncbridge
