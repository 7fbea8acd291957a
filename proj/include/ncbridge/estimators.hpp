#pragma once

#include "ncbridge/data.hpp"
#include "ncbridge/gmm.hpp"

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ncbridge {

struct LaggedDesign;

struct EstimateWithSE {
  double value = 0.0;
  double std_error = 0.0;
  std::string method;
  std::vector<std::string> warnings;

  double variance() const { return std_error * std_error; }
};

/// Column indices into NCDataset::v used as controls.
using Controls = std::vector<Index>;
Controls all_controls(const NCDataset& data);

/// Conventional IV: cov(Z, Y) / cov(X, Z) when no controls are given, two stage
/// least squares of Y on (1, X, V_c) with instruments (1, Z, V_c) otherwise.
/// Sandwich standard error. Throws WeakInstrumentError when cov(X, Z) is
/// numerically zero; a first-stage |t| < 2 adds a warning.
EstimateWithSE iv_estimate(const NCDataset& data, const Controls& controls = {});

/// Negative control estimator
///   (s_xw s_zy - s_xy s_zw) / (s_xw s_xz - s_xx s_zw)
/// with the standard error of the just-identified GMM fit of
/// b = (1, X, W) gamma, q = (1, X, Z).
EstimateWithSE nc_estimate(const NCDataset& data);

/// Modified two stage least squares: W on (1, X, Z) -> W_hat, then Y on
/// (1, X, W_hat); returns the coefficient of X. Numerically the same estimator
/// as nc_estimate.
EstimateWithSE nc_tsls(const NCDataset& data);

/// Coefficient of Z in the regression of W on (1, X, Z) with its classical
/// OLS standard error. |t| < 2 adds a weak-identification warning.
EstimateWithSE first_stage_relevance(const NCDataset& data);

/// Covariance-level forms of the closed-form estimators.
double iv_from_covariances(const CovarianceSummary& s);
double nc_from_covariances(const CovarianceSummary& s);

struct RelevanceCheck {
  double coefficient = 0.0;  // (s_xw s_xz - s_xx s_zw) / (s_xz^2 - s_xx s_zz)
  double numerator = 0.0;    // the negative control denominator
  bool degenerate = false;   // numerator is numerically zero
};
RelevanceCheck relevance_from_covariances(const CovarianceSummary& s);

/// Coefficient of X from OLS of Y on (1, X, V_c); heteroskedasticity-robust SE.
EstimateWithSE ols_estimate(const NCDataset& data, const Controls& controls = {});

struct IpwOptions {
  int bootstrap = 200;
  double clip_lo = 0.01;
  double clip_hi = 0.99;
};

/// Hajek-normalized IPW contrast of means for binary X with a logistic
/// propensity model pr(X = 1 | 1, V_c), propensities clipped to [0.01, 0.99].
double ipw_point_estimate(const NCDataset& data, const Controls& controls = {}, const IpwOptions& opts = {});

/// As ipw_point_estimate with a nonparametric bootstrap standard error drawn
/// from `rng`. Resamples whose propensity fit fails are skipped; with
/// `bootstrap = 0` the standard error is NaN.
EstimateWithSE ipw_estimate(const NCDataset& data, const Controls& controls, std::mt19937_64& rng,
                            const IpwOptions& opts = {});

struct ConfoundingTestResult {
  EstimateWithSE alpha1;  // coefficient of X
  EstimateWithSE alpha2;  // coefficient of Z
  double p_alpha1 = 1.0;
  double p_alpha2 = 1.0;
  Index bandwidth = 0;
};

/// OLS of W on (X, Z, 1, lagged controls) with Newey-West standard errors and
/// two-sided normal p-values. Small p-values indicate unmeasured confounding.
ConfoundingTestResult confounding_test(const LaggedDesign& design, const HacConfig& hac);

/// Design matrix [1, x, V_c] built from a dataset.
Matrix intercept_exposure_design(const NCDataset& data, const Controls& controls);

}  // namespace ncbridge
