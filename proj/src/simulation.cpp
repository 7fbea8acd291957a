#include "ncbridge/simulation.hpp"

#include "ncbridge/errors.hpp"
#include "ncbridge/estimators.hpp"
#include "ncbridge/gmm.hpp"
#include "ncbridge/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>

namespace ncbridge {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double expit(double t) { return 1.0 / (1.0 + std::exp(-t)); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// (V, U) standard normal with correlation rho.
std::pair<double, double> correlated_pair(double rho, std::normal_distribution<double>& normal, std::mt19937_64& rng) {
  const double e1 = normal(rng);
  const double e2 = normal(rng);
  return {e1, rho * e1 + std::sqrt(1.0 - rho * rho) * e2};
}

const MomentSpec& binary_spec() {
  static const MomentSpec spec = [] {
    auto pair = builtin_bridges(BuiltinBridge::binary_interaction, 1);
    return MomentSpec(std::move(pair.bridge), std::move(pair.instruments), Contrast{});
  }();
  return spec;
}

MomentSpec additive_spec(Index covariates) {
  auto pair = builtin_bridges(BuiltinBridge::linear_additive, covariates);
  return MomentSpec(std::move(pair.bridge), std::move(pair.instruments));
}

ReplicateOutcome from_fit(const GmmFit& fit, const std::string& label) {
  const Index j = fit.index_of(label);
  ReplicateOutcome out{fit.theta[j], fit.std_error(j), fit.converged, {}};
  if (!fit.converged) out.failure = "optimizer did not converge";
  return out;
}

ReplicateOutcome from_estimate(const EstimateWithSE& e) { return {e.value, e.std_error, true, {}}; }

ReplicateOutcome series_estimator(Estimator e, const SeriesFrame& frame) {
  const HacConfig hac = HacConfig::fixed(kSeriesBandwidth);
  if (e == Estimator::ols) {
    Matrix design(frame.length(), 3);
    design.col(0).setOnes();
    design.col(1) = frame.x;
    design.col(2) = frame.covariates.col(0);
    const LinearGmmFit fit = linear_gmm(design, frame.y, design, hac);
    return {fit.coefficients[1], std::sqrt(fit.variance()(1, 1)), true, {}};
  }
  const LaggedDesign lagged = build_lagged(frame);
  const NCDataset& data = lagged.data;
  if (e == Estimator::nc) {
    GmmOptions options;
    options.hac = hac;
    return from_fit(gmm_fit(additive_spec(data.p()), data, options), "x");
  }
  if (e == Estimator::lagged_ols) {
    Matrix design = intercept_exposure_design(data, all_controls(data));
    design.conservativeResize(Eigen::NoChange, design.cols() + 1);
    design.col(design.cols() - 1) = data.w();
    const LinearGmmFit fit = linear_gmm(design, data.y(), design, hac);
    return {fit.coefficients[1], std::sqrt(fit.variance()(1, 1)), true, {}};
  }
  throw InvalidArgument(std::string(to_string(e)) + " is not available for the time-series scenario");
}

}  // namespace

Scenario parse_scenario(const std::string& name) {
  if (name == "binary_exposure") return Scenario::binary_exposure;
  if (name == "structural_continuous") return Scenario::structural_continuous;
  if (name == "timeseries") return Scenario::timeseries;
  throw InvalidArgument("unknown scenario '" + name + "' (binary_exposure, structural_continuous, timeseries)");
}

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::binary_exposure: return "binary_exposure";
    case Scenario::structural_continuous: return "structural_continuous";
    case Scenario::timeseries: return "timeseries";
  }
  return "unknown";
}

void DgpConfig::validate() const {
  if (n < 50) throw InvalidArgument("sample size must be at least 50");
  if (!std::isfinite(eta) || !std::isfinite(xi)) throw InvalidArgument("eta and xi must be finite");
  if (!(std::abs(sigma_uv) < 1.0)) throw InvalidArgument("sigma_uv must lie in (-1, 1)");
  if (scenario == Scenario::timeseries && !(std::abs(xi) < 1.0)) {
    throw InvalidArgument("time-series autocorrelation xi must satisfy |xi| < 1");
  }
}

double scenario_truth(Scenario s) { return s == Scenario::timeseries ? 0.7 : 0.5; }

NCDataset generate_binary_exposure(const DgpConfig& cfg, std::mt19937_64& rng, Vector* confounder) {
  cfg.validate();
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;
  const Index n = cfg.n;
  Vector x(n), y(n), z(n), w(n);
  RowMatrix v(n, 1);
  if (confounder) confounder->resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto [vi, ui] = correlated_pair(cfg.sigma_uv, normal, rng);
    if (confounder) (*confounder)[i] = ui;
    const double e1 = normal(rng);
    const double e2 = normal(rng);
    z[i] = 0.5 + 0.5 * vi + ui + e1;
    x[i] = uniform(rng) < expit(-0.5 + z[i] + 0.5 * vi + cfg.eta * ui) ? 1.0 : 0.0;
    w[i] = 1.0 - vi + cfg.xi * ui + e2;
    y[i] = 1.0 + 0.5 * x[i] + 2.0 * vi + ui + 1.5 * x[i] * ui + 2.0 * e2;
    v(i, 0) = vi;
  }
  return {std::move(x), std::move(y), std::move(z), std::move(w), std::move(v)};
}

NCDataset generate_structural(const DgpConfig& cfg, std::mt19937_64& rng, Vector* confounder) {
  cfg.validate();
  std::normal_distribution<double> normal;
  const Index n = cfg.n;
  Vector x(n), y(n), z(n), w(n);
  RowMatrix v(n, 1);
  if (confounder) confounder->resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto [vi, ui] = correlated_pair(cfg.sigma_uv, normal, rng);
    if (confounder) (*confounder)[i] = ui;
    const double e1 = normal(rng);
    const double e2 = normal(rng);
    const double e3 = normal(rng);
    z[i] = 0.5 + 1.5 * vi + cfg.eta * ui + e1;
    x[i] = 0.5 + z[i] + 0.5 * vi + 0.5 * vi * vi + 1.5 * ui + e2;
    w[i] = 1.0 - vi + cfg.xi * vi * vi + 1.5 * ui + e3;
    y[i] = 1.0 + 0.5 * x[i] + vi + ui + 2.0 * e3;
    v(i, 0) = vi;
  }
  return {std::move(x), std::move(y), std::move(z), std::move(w), std::move(v)};
}

SeriesFrame generate_series(const DgpConfig& cfg, std::mt19937_64& rng, Vector* confounder) {
  cfg.validate();
  const Index T = cfg.n;
  const Vector u = simulate_ar1(Ar1Config{cfg.xi}, T, rng);
  if (confounder) *confounder = u;
  std::normal_distribution<double> normal;
  SeriesFrame frame;
  frame.x.resize(T);
  frame.y.resize(T);
  frame.covariates.resize(T, 1);
  frame.covariate_names = {"v"};
  for (Index i = 0; i < T; ++i) {
    const double vi = 0.6 * u[i] + normal(rng);
    frame.x[i] = 0.4 + 1.5 * vi + cfg.eta * u[i] + normal(rng);
    frame.y[i] = 0.5 + 0.7 * frame.x[i] + 1.5 * vi + 0.9 * u[i] + normal(rng);
    frame.covariates(i, 0) = vi;
  }
  return frame;
}

std::variant<NCDataset, SeriesFrame> generate(const DgpConfig& cfg, std::mt19937_64& rng) {
  switch (cfg.scenario) {
    case Scenario::binary_exposure: return generate_binary_exposure(cfg, rng);
    case Scenario::structural_continuous: return generate_structural(cfg, rng);
    case Scenario::timeseries: return generate_series(cfg, rng);
  }
  throw InvalidArgument("unknown scenario");
}

Estimator parse_estimator(const std::string& name) {
  if (name == "nc") return Estimator::nc;
  if (name == "ols") return Estimator::ols;
  if (name == "ipw") return Estimator::ipw;
  if (name == "iv") return Estimator::iv;
  if (name == "lagged_ols") return Estimator::lagged_ols;
  throw InvalidArgument("unknown estimator '" + name + "' (nc, ols, ipw, iv, lagged_ols)");
}

std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::nc: return "nc";
    case Estimator::ols: return "ols";
    case Estimator::ipw: return "ipw";
    case Estimator::iv: return "iv";
    case Estimator::lagged_ols: return "lagged_ols";
  }
  return "unknown";
}

std::vector<Estimator> default_estimators(Scenario s) {
  switch (s) {
    case Scenario::binary_exposure: return {Estimator::nc, Estimator::ipw, Estimator::ols};
    case Scenario::structural_continuous: return {Estimator::nc, Estimator::ols, Estimator::iv};
    case Scenario::timeseries: return {Estimator::nc, Estimator::ols, Estimator::lagged_ols};
  }
  return {};
}

ReplicateOutcome run_estimator(Estimator e, const DgpConfig& cfg, const std::variant<NCDataset, SeriesFrame>& data,
                               std::mt19937_64& rng, int ipw_bootstrap) {
  try {
    if (const auto* frame = std::get_if<SeriesFrame>(&data)) return series_estimator(e, *frame);
    const NCDataset& d = std::get<NCDataset>(data);
    const Controls v{0};
    switch (e) {
      case Estimator::nc:
        if (cfg.scenario == Scenario::binary_exposure) return from_fit(gmm_fit(binary_spec(), d), "ace");
        return from_fit(gmm_fit(additive_spec(1), d), "x");
      case Estimator::ols: return from_estimate(ols_estimate(d, v));
      case Estimator::iv: return from_estimate(iv_estimate(d, v));
      case Estimator::ipw: {
        IpwOptions opts;
        opts.bootstrap = ipw_bootstrap;
        return from_estimate(ipw_estimate(d, v, rng, opts));
      }
      case Estimator::lagged_ols:
        throw InvalidArgument("lagged_ols is only available for the time-series scenario");
    }
  } catch (const InvalidArgument&) {
    throw;
  } catch (const Error& err) {
    return {kNaN, kNaN, false, err.what()};
  }
  return {kNaN, kNaN, false, "unknown estimator"};
}

double EstimatorSummary::mc_se() const {
  return converged > 0 ? sd / std::sqrt(static_cast<double>(converged)) : kNaN;
}

const EstimatorSummary& SimulationReport::summary(Estimator e) const {
  for (const auto& s : summaries) {
    if (s.estimator == e) return s;
  }
  throw InvalidArgument("estimator " + std::string(to_string(e)) + " is not in the report");
}

unsigned default_thread_count() {
  if (const char* env = std::getenv("NC_THREADS")) {
    char* end = nullptr;
    const long value = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && value > 0) return static_cast<unsigned>(value);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::uint64_t replication_seed(std::uint64_t master_seed, std::uint64_t r) {
  return splitmix64(splitmix64(master_seed) ^ (r * 0xD1B54A32D192ED03ULL + 1));
}

SimulationReport run_study(const DgpConfig& cfg, const std::vector<Estimator>& estimators, int replications,
                           std::uint64_t master_seed, const StudyOptions& options) {
  cfg.validate();
  if (replications < 1) throw InvalidArgument("replications must be at least 1");
  if (estimators.empty()) throw InvalidArgument("at least one estimator is required");
  for (Estimator e : estimators) {
    const bool series = cfg.scenario == Scenario::timeseries;
    const bool ok = e == Estimator::nc || e == Estimator::ols || (e == Estimator::lagged_ols && series) ||
                    (e == Estimator::ipw && cfg.scenario == Scenario::binary_exposure) ||
                    (e == Estimator::iv && !series);
    if (!ok) {
      throw InvalidArgument(std::string(to_string(e)) + " is not available for scenario " +
                            std::string(to_string(cfg.scenario)));
    }
  }

  SimulationReport report;
  report.config = cfg;
  report.replications = replications;
  report.seed = master_seed;
  report.truth = scenario_truth(cfg.scenario);
  const auto R = static_cast<std::size_t>(replications);
  report.replicates.assign(estimators.size(), std::vector<ReplicateOutcome>(R));

  auto work = [&](std::size_t r) {
    std::mt19937_64 rng(replication_seed(master_seed, r));
    const auto data = generate(cfg, rng);
    for (std::size_t k = 0; k < estimators.size(); ++k) {
      report.replicates[k][r] = run_estimator(estimators[k], cfg, data, rng, options.ipw_bootstrap);
    }
  };

  const unsigned threads = std::min<unsigned>(options.threads ? options.threads : default_thread_count(),
                                              static_cast<unsigned>(R));
  if (threads <= 1) {
    for (std::size_t r = 0; r < R; ++r) work(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t r = next++; r < R && !failed; r = next++) {
          try {
            work(r);
          } catch (...) {
            if (!failed.exchange(true)) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  for (std::size_t k = 0; k < estimators.size(); ++k) {
    EstimatorSummary s;
    s.estimator = estimators[k];
    std::vector<double> values;
    std::vector<Interval> intervals;
    double se_sum = 0.0;
    bool has_se = true;
    for (const auto& o : report.replicates[k]) {
      if (!o.ok || !std::isfinite(o.estimate)) continue;
      values.push_back(o.estimate);
      if (std::isfinite(o.std_error)) {
        se_sum += o.std_error;
        intervals.push_back(confidence_interval(o.estimate, o.std_error * o.std_error));
      } else {
        has_se = false;
      }
    }
    s.converged = static_cast<Index>(values.size());
    s.failed = replications - s.converged;
    if (!values.empty()) {
      const Eigen::Map<const Vector> v(values.data(), s.converged);
      s.mean = v.mean();
      s.bias = s.mean - report.truth;
      s.sd = s.converged > 1 ? std::sqrt((v.array() - s.mean).square().sum() / static_cast<double>(s.converged - 1))
                             : 0.0;
      s.mean_se = has_se ? se_sum / static_cast<double>(s.converged) : kNaN;
      s.coverage = has_se ? coverage_probability(intervals, report.truth) : kNaN;
    } else {
      s.mean = s.bias = s.sd = s.mean_se = s.coverage = kNaN;
    }
    report.summaries.push_back(s);
  }
  return report;
}

Matrix analytic_covariance(const LinearGaussianSetting& s) {
  const auto [a1, a2, a3] = s.alpha;
  const auto [v1, v2, v3] = s.sigma2;
  const double b = s.beta;
  const double var_x = a2 * a2 + v2;
  Matrix c(3, 3);
  c(0, 0) = var_x;
  c(0, 1) = b * var_x + a2 * a3;
  c(0, 2) = a1 * a2;
  c(1, 1) = b * b * var_x + 2.0 * b * a2 * a3 + a3 * a3 + v3;
  c(1, 2) = b * a1 * a2 + a1 * a3;
  c(2, 2) = a1 * a1 + v1;
  c(1, 0) = c(0, 1);
  c(2, 0) = c(0, 2);
  c(2, 1) = c(1, 2);
  return c;
}

EmpiricalCovariance empirical_covariance(const LinearGaussianSetting& s, Index n, std::mt19937_64& rng) {
  if (n < 2) throw InvalidArgument("empirical covariance needs n >= 2");
  std::normal_distribution<double> normal;
  Matrix data(n, 3);
  const double s1 = std::sqrt(s.sigma2[0]);
  const double s2 = std::sqrt(s.sigma2[1]);
  const double s3 = std::sqrt(s.sigma2[2]);
  for (Index i = 0; i < n; ++i) {
    const double u = normal(rng);
    const double e1 = normal(rng);
    const double e2 = normal(rng);
    const double e3 = normal(rng);
    const double x = s.alpha[1] * u + s2 * e1;
    data(i, 0) = x;
    data(i, 1) = s.beta * x + s.alpha[2] * u + s3 * e3;
    data(i, 2) = s.alpha[0] * u + s1 * e2;
  }
  const Matrix centered = data.rowwise() - data.colwise().mean();
  EmpiricalCovariance out;
  out.covariance = centered.transpose() * centered / static_cast<double>(n);
  out.mc_se.resize(3, 3);
  for (Index a = 0; a < 3; ++a) {
    for (Index b = 0; b < 3; ++b) {
      const Vector prod = centered.col(a).cwiseProduct(centered.col(b));
      const double var = (prod.array() - prod.mean()).square().sum() / static_cast<double>(n - 1);
      out.mc_se(a, b) = std::sqrt(var / static_cast<double>(n));
    }
  }
  return out;
}

CounterexampleReport counterexample_check(std::uint64_t seed, Index n) {
  CounterexampleReport r;
  r.settings[0] = LinearGaussianSetting{};
  r.settings[1] = LinearGaussianSetting{-1.0,
                                        {std::sqrt(3.0 / 5.0), std::sqrt(5.0 / 3.0), std::sqrt(15.0)},
                                        {7.0 / 5.0, 1.0 / 3.0, 2.0}};
  r.target.resize(3, 3);
  r.target << 2, 3, 1, 3, 9, 2, 1, 2, 2;
  for (std::size_t k = 0; k < 2; ++k) {
    r.analytic[k] = analytic_covariance(r.settings[k]);
    r.analytic_error = std::max(r.analytic_error, (r.analytic[k] - r.target).cwiseAbs().maxCoeff());
    std::mt19937_64 rng(replication_seed(seed, k));
    r.empirical[k] = empirical_covariance(r.settings[k], n, rng);
    const Matrix z = (r.empirical[k].covariance - r.target).cwiseAbs().cwiseQuotient(r.empirical[k].mc_se);
    r.max_z = std::max(r.max_z, z.maxCoeff());
  }
  LinearGaussianSetting perturbed = r.settings[0];
  perturbed.beta = 0.9;
  r.perturbed = analytic_covariance(perturbed);
  r.analytic_pass = r.analytic_error <= 1e-10;
  r.empirical_pass = r.max_z <= 4.0;
  r.perturbation_detected = (r.perturbed - r.target).cwiseAbs().maxCoeff() > 1e-10;
  return r;
}

}  // namespace ncbridge
