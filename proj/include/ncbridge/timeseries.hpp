#pragma once

#include "ncbridge/data.hpp"
#include "ncbridge/estimators.hpp"
#include "ncbridge/gmm.hpp"

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ncbridge {

/// Raw series in time order. Negative controls are built from the series
/// itself: W_i = Y_{i-lag}, Z_i = X_{i+lag}.
struct SeriesFrame {
  Vector x;
  Vector y;
  RowMatrix covariates;  // T x p, lagged alongside the outcome
  RowMatrix trend;       // T x r, entered at the current time only
  std::vector<std::string> covariate_names;
  Index lag = 1;
  Index exposure_lags = 1;  // X_{i-1}, ..., X_{i-L} enter as controls

  Index length() const { return x.size(); }
};

/// Lagged design: an NCDataset whose covariate columns are, in order,
///   X_{i-1..i-L} | V_i | V_{i-lag} | T_i
/// together with the role of every column.
struct LaggedDesign {
  NCDataset data;
  std::vector<std::string> covariate_names;
  Controls exposure_lag_columns;
  Controls current_columns;
  Controls lagged_columns;
  Controls trend_columns;
  std::vector<Index> time_index;  // series position of each row
  Index lag = 1;

  /// Controls of the outcome regression: exposure lags, V_i, T_i.
  Controls outcome_controls() const;
  /// Controls of the confounding test: exposure lags, V_{i-lag}, T_i.
  Controls test_controls() const;
};

/// Rows i = max(lag, L) .. T-1-lag (0-based), so n = T - 2*lag when L <= lag.
/// Throws InvalidArgument when the series is too short (T < lag + 3 or fewer
/// than two usable rows) or lag < 1.
LaggedDesign build_lagged(const SeriesFrame& frame);

/// Secular and seasonal trend basis for t = 1..T:
///   t/T, t^2/T^2, sin(2 pi j t / period), cos(2 pi j t / period), j = 1..harmonics.
RowMatrix trend_basis(Index length, int harmonics, double period = 365.0);

struct Ar1Config {
  double xi = 0.0;
};

/// Stationary AR(1) with unit marginal variance:
///   U_1 ~ N(0, 1),  U_i = xi U_{i-1} + (1 - xi^2)^{1/2} e_i.
Vector simulate_ar1(const Ar1Config& cfg, Index length, std::mt19937_64& rng);

struct SeriesReport {
  Index rows = 0;
  Index bandwidth = 0;
  std::vector<std::string> covariate_names;
  EstimateWithSE ols;
  ConfoundingTestResult confounding;
  GmmFit nc_fit;
  EstimateWithSE nc;
};

/// Ordinary least squares, confounding test and negative control GMM (default
/// bridge: timeseries_lag over every lagged-design column), all with
/// Newey-West standard errors.
SeriesReport analyze_series(const SeriesFrame& frame, const HacConfig& hac = HacConfig::rule(),
                            const std::optional<MomentSpec>& bridge = std::nullopt);

/// Reads a series CSV: rows are time order; `covariates` are lagged with the
/// outcome. Optional square-root transform of the outcome.
SeriesFrame read_series_csv(const std::filesystem::path& path, const std::string& x_column,
                            const std::string& y_column, const std::vector<std::string>& covariates,
                            bool sqrt_outcome);

}  // namespace ncbridge
