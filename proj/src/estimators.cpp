#include "ncbridge/estimators.hpp"

#include "ncbridge/errors.hpp"
#include "ncbridge/inference.hpp"
#include "ncbridge/timeseries.hpp"

#include <cmath>
#include <limits>

namespace ncbridge {

namespace {

constexpr double kRelativeZero = 1e-12;

Matrix columns(std::initializer_list<const Vector*> cols) {
  const Index n = (*cols.begin())->size();
  Matrix m(n, static_cast<Index>(cols.size()));
  Index j = 0;
  for (const Vector* c : cols) m.col(j++) = *c;
  return m;
}

void append_controls(Matrix& design, const NCDataset& data, const Controls& controls) {
  const Index base = design.cols();
  design.conservativeResize(Eigen::NoChange, base + static_cast<Index>(controls.size()));
  for (std::size_t j = 0; j < controls.size(); ++j) {
    const Index c = controls[j];
    if (c < 0 || c >= data.p()) throw InvalidArgument("control column " + std::to_string(c) + " out of range");
    design.col(base + static_cast<Index>(j)) = data.v().col(c);
  }
}

double classical_t(const Matrix& design, const Vector& response, Index coef) {
  const OlsFit fit = ols_fit(design, response);
  const double dof = static_cast<double>(design.rows() - design.cols());
  const double s2 = fit.residuals.squaredNorm() / dof;
  const double se = std::sqrt(s2 * fit.xtx_inverse(coef, coef));
  return fit.coefficients[coef] / se;
}

void check_binary(const Vector& x) {
  for (Index i = 0; i < x.size(); ++i) {
    if (x[i] != 0.0 && x[i] != 1.0) throw InvalidArgument("IPW needs a binary (0/1) exposure");
  }
}

}  // namespace

Controls all_controls(const NCDataset& data) {
  Controls c(static_cast<std::size_t>(data.p()));
  for (Index j = 0; j < data.p(); ++j) c[static_cast<std::size_t>(j)] = j;
  return c;
}

Matrix intercept_exposure_design(const NCDataset& data, const Controls& controls) {
  const Vector ones = Vector::Ones(data.n());
  Matrix design = columns({&ones, &data.x()});
  append_controls(design, data, controls);
  return design;
}

double iv_from_covariances(const CovarianceSummary& s) {
  const double scale = std::sqrt(s.xx * s.zz);
  if (!(std::abs(s.xz) > kRelativeZero * scale) || scale == 0.0) {
    throw WeakInstrumentError("IV: cov(X, Z) is numerically zero");
  }
  return s.zy / s.xz;
}

double nc_from_covariances(const CovarianceSummary& s) {
  const double denominator = s.xw * s.xz - s.xx * s.zw;
  const double scale = std::abs(s.xw * s.xz) + std::abs(s.xx * s.zw);
  if (!(std::abs(denominator) > kRelativeZero * scale) || scale == 0.0) {
    throw IdentificationError("negative control estimator: denominator s_xw s_xz - s_xx s_zw is numerically zero");
  }
  return (s.xw * s.zy - s.xy * s.zw) / denominator;
}

RelevanceCheck relevance_from_covariances(const CovarianceSummary& s) {
  RelevanceCheck r;
  r.numerator = s.xw * s.xz - s.xx * s.zw;
  const double scale = std::abs(s.xw * s.xz) + std::abs(s.xx * s.zw);
  r.degenerate = !(std::abs(r.numerator) > kRelativeZero * scale);
  const double denominator = s.xz * s.xz - s.xx * s.zz;
  if (denominator == 0.0) throw RankDeficientError("first stage: X and Z are perfectly collinear");
  r.coefficient = r.degenerate ? 0.0 : r.numerator / denominator;
  return r;
}

EstimateWithSE iv_estimate(const NCDataset& data, const Controls& controls) {
  const Vector ones = Vector::Ones(data.n());
  Matrix regressors = columns({&ones, &data.x()});
  Matrix instruments = columns({&ones, &data.z()});
  append_controls(regressors, data, controls);
  append_controls(instruments, data, controls);

  EstimateWithSE est;
  est.method = "iv";
  LinearGmmFit fit;
  try {
    fit = linear_gmm(regressors, data.y(), instruments);
  } catch (const RankDeficientError& e) {
    throw WeakInstrumentError(std::string("IV: instrument carries no information on X (") + e.what() + ")");
  }
  if (controls.empty()) {
    est.value = iv_from_covariances(covariance_summary(data));
  } else {
    est.value = fit.coefficients[1];
  }
  est.std_error = std::sqrt(fit.var_iid(1, 1));

  Matrix first = instruments;
  const double t = classical_t(first, data.x(), 1);
  if (!(std::abs(t) >= 2.0)) {
    est.warnings.push_back("weak instrument: first-stage |t| = " + std::to_string(std::abs(t)) + " < 2");
  }
  return est;
}

EstimateWithSE nc_estimate(const NCDataset& data) {
  EstimateWithSE est;
  est.method = "nc";
  est.value = nc_from_covariances(covariance_summary(data));

  const Vector ones = Vector::Ones(data.n());
  const LinearGmmFit fit = linear_gmm(columns({&ones, &data.x(), &data.w()}), data.y(),
                                      columns({&ones, &data.x(), &data.z()}));
  est.std_error = std::sqrt(fit.var_iid(1, 1));

  const EstimateWithSE relevance = first_stage_relevance(data);
  for (const auto& w : relevance.warnings) est.warnings.push_back(w);
  return est;
}

EstimateWithSE nc_tsls(const NCDataset& data) {
  const Vector ones = Vector::Ones(data.n());
  const Matrix first_design = columns({&ones, &data.x(), &data.z()});
  const OlsFit first = ols_fit(first_design, data.w());
  const Vector w_hat = first_design * first.coefficients;
  const OlsFit second = ols_fit(columns({&ones, &data.x(), &w_hat}), data.y());

  EstimateWithSE est;
  est.method = "tsls";
  est.value = second.coefficients[1];
  const LinearGmmFit fit = linear_gmm(columns({&ones, &data.x(), &data.w()}), data.y(), first_design);
  est.std_error = std::sqrt(fit.var_iid(1, 1));
  return est;
}

EstimateWithSE first_stage_relevance(const NCDataset& data) {
  const Vector ones = Vector::Ones(data.n());
  const Matrix design = columns({&ones, &data.x(), &data.z()});
  const OlsFit fit = ols_fit(design, data.w());
  const double dof = static_cast<double>(data.n() - 3);

  EstimateWithSE est;
  est.method = "first_stage";
  est.value = fit.coefficients[2];
  est.std_error = std::sqrt(fit.residuals.squaredNorm() / dof * fit.xtx_inverse(2, 2));
  const double t = est.std_error > 0.0 ? est.value / est.std_error : (est.value == 0.0 ? 0.0 : INFINITY);
  if (!(std::abs(t) >= 2.0)) {
    est.warnings.push_back("weak identification: first-stage coefficient of Z has |t| = " +
                           std::to_string(std::abs(t)) + " < 2");
  }
  if (relevance_from_covariances(covariance_summary(data)).degenerate) {
    est.warnings.push_back("degenerate identification: s_xw s_xz - s_xx s_zw is numerically zero");
  }
  return est;
}

EstimateWithSE ols_estimate(const NCDataset& data, const Controls& controls) {
  const Matrix design = intercept_exposure_design(data, controls);
  const LinearGmmFit fit = linear_gmm(design, data.y(), design);
  return {fit.coefficients[1], std::sqrt(fit.var_iid(1, 1)), "ols", {}};
}

double ipw_point_estimate(const NCDataset& data, const Controls& controls, const IpwOptions& opts) {
  check_binary(data.x());
  Matrix design = Matrix::Ones(data.n(), 1);
  append_controls(design, data, controls);
  const LogisticFit fit = logistic_fit(design, data.x());
  const Vector e = fit.fitted.cwiseMax(opts.clip_lo).cwiseMin(opts.clip_hi);

  double treated_num = 0.0, treated_den = 0.0, control_num = 0.0, control_den = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    if (data.x()[i] == 1.0) {
      treated_num += data.y()[i] / e[i];
      treated_den += 1.0 / e[i];
    } else {
      control_num += data.y()[i] / (1.0 - e[i]);
      control_den += 1.0 / (1.0 - e[i]);
    }
  }
  return treated_num / treated_den - control_num / control_den;
}

EstimateWithSE ipw_estimate(const NCDataset& data, const Controls& controls, std::mt19937_64& rng,
                            const IpwOptions& opts) {
  EstimateWithSE est;
  est.method = "ipw";
  est.value = ipw_point_estimate(data, controls, opts);
  if (opts.bootstrap == 0) {
    est.std_error = std::numeric_limits<double>::quiet_NaN();
    return est;
  }
  if (opts.bootstrap < 0) throw InvalidArgument("bootstrap count must be non-negative");

  std::uniform_int_distribution<Index> pick(0, data.n() - 1);
  std::vector<Index> rows(static_cast<std::size_t>(data.n()));
  std::vector<double> draws;
  draws.reserve(static_cast<std::size_t>(opts.bootstrap));
  for (int b = 0; b < opts.bootstrap; ++b) {
    for (auto& r : rows) r = pick(rng);
    try {
      draws.push_back(ipw_point_estimate(data.subset(rows), controls, opts));
    } catch (const StatisticalError&) {
    }
  }
  if (draws.size() < 2) throw StatisticalError("IPW bootstrap: fewer than two usable resamples");
  if (static_cast<int>(draws.size()) < opts.bootstrap) {
    est.warnings.push_back(std::to_string(opts.bootstrap - static_cast<int>(draws.size())) +
                           " bootstrap resamples skipped (propensity fit failed)");
  }
  const Eigen::Map<const Vector> d(draws.data(), static_cast<Index>(draws.size()));
  est.std_error = std::sqrt((d.array() - d.mean()).square().sum() / static_cast<double>(draws.size() - 1));
  return est;
}

ConfoundingTestResult confounding_test(const LaggedDesign& design, const HacConfig& hac) {
  const NCDataset& data = design.data;
  if (data.w().maxCoeff() == data.w().minCoeff()) {
    throw RankDeficientError("confounding test: W is constant, so [W, 1] is rank deficient");
  }
  const Vector ones = Vector::Ones(data.n());
  Matrix regressors = columns({&data.x(), &data.z(), &ones});
  append_controls(regressors, data, design.test_controls());
  const LinearGmmFit fit = linear_gmm(regressors, data.w(), regressors, hac);

  ConfoundingTestResult r;
  r.bandwidth = *fit.hac_bandwidth;
  const Matrix& var = fit.variance();
  r.alpha1 = {fit.coefficients[0], std::sqrt(var(0, 0)), "confounding_test", {}};
  r.alpha2 = {fit.coefficients[1], std::sqrt(var(1, 1)), "confounding_test", {}};
  r.p_alpha1 = p_value(r.alpha1.value, var(0, 0));
  r.p_alpha2 = p_value(r.alpha2.value, var(1, 1));
  return r;
}

}  // namespace ncbridge
