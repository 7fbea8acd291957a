#pragma once

#include "ncbridge/data.hpp"
#include "ncbridge/timeseries.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace ncbridge {

enum class Scenario { binary_exposure, structural_continuous, timeseries };
Scenario parse_scenario(const std::string& name);
std::string_view to_string(Scenario s);

/// eta: confounding strength. xi: association of W with U (binary exposure),
/// V^2 term in W (structural), autocorrelation of U (time series).
struct DgpConfig {
  Scenario scenario = Scenario::binary_exposure;
  double eta = 0.5;
  double xi = 0.6;
  Index n = 500;
  double sigma_uv = 0.5;

  void validate() const;
};

/// Effect the estimators target: 0.5, 0.5 and 0.7 respectively.
double scenario_truth(Scenario s);

/// Covariate column 0 is V. `confounder`, when given, receives the latent U.
NCDataset generate_binary_exposure(const DgpConfig& cfg, std::mt19937_64& rng, Vector* confounder = nullptr);
NCDataset generate_structural(const DgpConfig& cfg, std::mt19937_64& rng, Vector* confounder = nullptr);
/// Length-n series with V as its single lagged covariate, lag 1, one exposure lag.
SeriesFrame generate_series(const DgpConfig& cfg, std::mt19937_64& rng, Vector* confounder = nullptr);
std::variant<NCDataset, SeriesFrame> generate(const DgpConfig& cfg, std::mt19937_64& rng);

enum class Estimator { nc, ols, ipw, iv, lagged_ols };
Estimator parse_estimator(const std::string& name);
std::string_view to_string(Estimator e);
/// NC, IPW, OLS / NC, OLS, IV / NC, OLS, lagged OLS.
std::vector<Estimator> default_estimators(Scenario s);

/// Fixed Newey-West bandwidth of the time-series study.
inline constexpr Index kSeriesBandwidth = 10;

struct ReplicateOutcome {
  double estimate = 0.0;
  double std_error = 0.0;
  bool ok = false;
  std::string failure;
};

/// One estimator on one generated dataset. Failures are reported, not thrown.
ReplicateOutcome run_estimator(Estimator e, const DgpConfig& cfg, const std::variant<NCDataset, SeriesFrame>& data,
                               std::mt19937_64& rng, int ipw_bootstrap);

struct EstimatorSummary {
  Estimator estimator = Estimator::nc;
  Index converged = 0;
  Index failed = 0;
  double mean = 0.0;
  double bias = 0.0;
  double sd = 0.0;       // empirical, divisor converged - 1
  double mean_se = 0.0;
  double coverage = 0.0;  // NaN when no standard errors were computed
  double mc_se() const;   // sd / sqrt(converged)
};

struct SimulationReport {
  DgpConfig config;
  int replications = 0;
  std::uint64_t seed = 0;
  double truth = 0.0;
  std::vector<EstimatorSummary> summaries;
  std::vector<std::vector<ReplicateOutcome>> replicates;  // [estimator][replication]

  const EstimatorSummary& summary(Estimator e) const;
};

struct StudyOptions {
  int ipw_bootstrap = 200;
  unsigned threads = 0;  // 0: default_thread_count()
};

/// NC_THREADS when set to a positive integer, otherwise hardware concurrency.
unsigned default_thread_count();

/// Seed of replication r: a splitmix64 mix of (master_seed, r).
std::uint64_t replication_seed(std::uint64_t master_seed, std::uint64_t r);

/// Replications are independent and keyed by index, so the report does not
/// depend on the thread count.
SimulationReport run_study(const DgpConfig& cfg, const std::vector<Estimator>& estimators, int replications,
                           std::uint64_t master_seed, const StudyOptions& options = {});

/// W = a1 U + s1 e2, X = a2 U + s2 e1, Y = beta X + a3 U + s3 e3 with
/// standard normal U, e1, e2, e3; `sigma2` holds (s1^2, s2^2, s3^2).
struct LinearGaussianSetting {
  double beta = 1.0;
  std::array<double, 3> alpha{1.0, 1.0, 1.0};
  std::array<double, 3> sigma2{1.0, 1.0, 4.0};
};

/// Covariance of (X, Y, W).
Matrix analytic_covariance(const LinearGaussianSetting& s);
struct EmpiricalCovariance {
  Matrix covariance;
  Matrix mc_se;
};
EmpiricalCovariance empirical_covariance(const LinearGaussianSetting& s, Index n, std::mt19937_64& rng);

struct CounterexampleReport {
  std::array<LinearGaussianSetting, 2> settings;
  Matrix target;
  std::array<Matrix, 2> analytic;
  std::array<EmpiricalCovariance, 2> empirical;
  Matrix perturbed;  // first setting with beta = 0.9
  double analytic_error = 0.0;
  double max_z = 0.0;  // largest |empirical - target| / mc_se
  bool analytic_pass = false;
  bool empirical_pass = false;
  bool perturbation_detected = false;

  bool pass() const { return analytic_pass && empirical_pass && perturbation_detected; }
};

/// Two settings (beta = 1 and beta = -1) sharing the covariance
/// [[2,3,1],[3,9,2],[1,2,2]]: exact to 1e-10 analytically, within 4 Monte
/// Carlo standard errors at sample size `n`.
CounterexampleReport counterexample_check(std::uint64_t seed = 20240101, Index n = 1000000);

}  // namespace ncbridge
