#include "ncbridge/timeseries.hpp"

#include "ncbridge/errors.hpp"
#include "ncbridge/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ncbridge {

namespace {

Controls concat(std::initializer_list<const Controls*> parts) {
  Controls out;
  for (const Controls* p : parts) out.insert(out.end(), p->begin(), p->end());
  return out;
}

}  // namespace

Controls LaggedDesign::outcome_controls() const {
  return concat({&exposure_lag_columns, &current_columns, &trend_columns});
}

Controls LaggedDesign::test_controls() const {
  return concat({&exposure_lag_columns, &lagged_columns, &trend_columns});
}

LaggedDesign build_lagged(const SeriesFrame& frame) {
  const Index T = frame.length();
  const Index k = frame.lag;
  const Index L = frame.exposure_lags;
  if (k < 1) throw InvalidArgument("lag must be at least 1");
  if (L < 0) throw InvalidArgument("exposure lag count must be non-negative");
  if (frame.y.size() != T) throw InvalidArgument("series x and y differ in length");
  const Index p = frame.covariates.cols();
  const Index r = frame.trend.cols();
  if (p > 0 && frame.covariates.rows() != T) throw InvalidArgument("covariate rows differ from series length");
  if (r > 0 && frame.trend.rows() != T) throw InvalidArgument("trend rows differ from series length");
  if (!frame.covariate_names.empty() && static_cast<Index>(frame.covariate_names.size()) != p) {
    throw InvalidArgument("covariate name count differs from covariate columns");
  }

  const Index start = std::max(k, L);
  const Index n = T - k - start;
  if (T < k + 3 || n < 2) {
    throw InvalidArgument("series of length " + std::to_string(T) + " is too short for lag " + std::to_string(k));
  }

  const Index cols = L + 2 * p + r;
  Vector x(n), y(n), z(n), w(n);
  RowMatrix v(n, cols);
  std::vector<Index> time(static_cast<std::size_t>(n));
  for (Index row = 0; row < n; ++row) {
    const Index i = start + row;
    time[static_cast<std::size_t>(row)] = i;
    x[row] = frame.x[i];
    y[row] = frame.y[i];
    w[row] = frame.y[i - k];
    z[row] = frame.x[i + k];
    Index c = 0;
    for (Index l = 1; l <= L; ++l) v(row, c++) = frame.x[i - l];
    for (Index j = 0; j < p; ++j) v(row, c++) = frame.covariates(i, j);
    for (Index j = 0; j < p; ++j) v(row, c++) = frame.covariates(i - k, j);
    for (Index j = 0; j < r; ++j) v(row, c++) = frame.trend(i, j);
  }

  LaggedDesign d{NCDataset(std::move(x), std::move(y), std::move(z), std::move(w), std::move(v)), {}, {}, {}, {}, {},
                 std::move(time), k};
  Index c = 0;
  for (Index l = 1; l <= L; ++l) {
    d.covariate_names.push_back("x_lag" + std::to_string(l));
    d.exposure_lag_columns.push_back(c++);
  }
  const auto name = [&](Index j) {
    return frame.covariate_names.empty() ? "v" + std::to_string(j) : frame.covariate_names[static_cast<std::size_t>(j)];
  };
  for (Index j = 0; j < p; ++j) {
    d.covariate_names.push_back(name(j));
    d.current_columns.push_back(c++);
  }
  for (Index j = 0; j < p; ++j) {
    d.covariate_names.push_back(name(j) + "_lag" + std::to_string(k));
    d.lagged_columns.push_back(c++);
  }
  for (Index j = 0; j < r; ++j) {
    d.covariate_names.push_back("trend" + std::to_string(j));
    d.trend_columns.push_back(c++);
  }
  return d;
}

RowMatrix trend_basis(Index length, int harmonics, double period) {
  if (length < 1) throw InvalidArgument("trend basis needs a positive length");
  if (harmonics < 0) throw InvalidArgument("harmonic count must be non-negative");
  if (!(period > 0.0)) throw InvalidArgument("trend period must be positive");
  RowMatrix basis(length, 2 + 2 * harmonics);
  const double T = static_cast<double>(length);
  for (Index i = 0; i < length; ++i) {
    const double t = static_cast<double>(i + 1);
    basis(i, 0) = t / T;
    basis(i, 1) = t * t / (T * T);
    for (int j = 1; j <= harmonics; ++j) {
      const double angle = 2.0 * std::numbers::pi * j * t / period;
      basis(i, 2 * j) = std::sin(angle);
      basis(i, 2 * j + 1) = std::cos(angle);
    }
  }
  return basis;
}

Vector simulate_ar1(const Ar1Config& cfg, Index length, std::mt19937_64& rng) {
  if (!(std::abs(cfg.xi) < 1.0)) throw InvalidArgument("AR(1) coefficient must satisfy |xi| < 1");
  if (length < 1) throw InvalidArgument("AR(1) length must be positive");
  std::normal_distribution<double> normal;
  const double innovation = std::sqrt(1.0 - cfg.xi * cfg.xi);
  Vector u(length);
  u[0] = normal(rng);
  for (Index i = 1; i < length; ++i) u[i] = cfg.xi * u[i - 1] + innovation * normal(rng);
  return u;
}

SeriesReport analyze_series(const SeriesFrame& frame, const HacConfig& hac, const std::optional<MomentSpec>& bridge) {
  const LaggedDesign design = build_lagged(frame);
  const NCDataset& data = design.data;

  SeriesReport report;
  report.rows = data.n();
  report.bandwidth = hac.bandwidth(data.n());
  report.covariate_names = design.covariate_names;

  const Matrix ols_design = intercept_exposure_design(data, design.outcome_controls());
  const LinearGmmFit ols = linear_gmm(ols_design, data.y(), ols_design, hac);
  report.ols = {ols.coefficients[1], std::sqrt(ols.variance()(1, 1)), "ols", {}};

  report.confounding = confounding_test(design, hac);

  const MomentSpec spec = bridge ? *bridge : [&] {
    auto pair = builtin_bridges(BuiltinBridge::timeseries_lag, data.p());
    return MomentSpec(std::move(pair.bridge), std::move(pair.instruments));
  }();
  GmmOptions options;
  options.hac = hac;
  report.nc_fit = gmm_fit(spec, data, options);
  const Index xi = report.nc_fit.index_of("x");
  report.nc = {report.nc_fit.theta[xi], report.nc_fit.std_error(xi), "nc_gmm", {}};
  if (!report.nc_fit.converged) report.nc.warnings.push_back("GMM optimizer did not converge");
  const EstimateWithSE relevance = first_stage_relevance(data);
  for (const auto& w : relevance.warnings) report.nc.warnings.push_back(w);
  return report;
}

SeriesFrame read_series_csv(const std::filesystem::path& path, const std::string& x_column,
                            const std::string& y_column, const std::vector<std::string>& covariates,
                            bool sqrt_outcome) {
  const CsvTable table = read_csv_table(path);
  std::set<std::string> sqrt_columns;
  if (sqrt_outcome) sqrt_columns.insert(y_column);
  SeriesFrame frame;
  frame.x = take_column(table, x_column, {});
  frame.y = take_column(table, y_column, sqrt_columns);
  frame.covariates.resize(table.rows(), static_cast<Index>(covariates.size()));
  for (std::size_t j = 0; j < covariates.size(); ++j) {
    frame.covariates.col(static_cast<Index>(j)) = take_column(table, covariates[j], {});
  }
  frame.covariate_names = covariates;
  return frame;
}

}  // namespace ncbridge
