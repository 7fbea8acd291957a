#include "ncbridge/gmm.hpp"

#include "ncbridge/errors.hpp"
#include "ncbridge/optimize.hpp"

#include <cmath>

namespace ncbridge {

namespace {

constexpr double kRankTolerance = 1e-10;

void validate_weight(const Matrix& weight, Index m) {
  if (weight.rows() != m || weight.cols() != m) {
    throw InvalidArgument("weight matrix must be " + std::to_string(m) + "x" + std::to_string(m));
  }
  const double scale = std::max(1.0, weight.cwiseAbs().maxCoeff());
  if ((weight - weight.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InvalidArgument("weight matrix is not symmetric");
  }
  Eigen::LLT<Matrix> llt(weight);
  if (llt.info() != Eigen::Success) throw InvalidArgument("weight matrix is not positive definite");
}

// Linear bridge: m_n(theta) = c - A theta.
struct LinearSystem {
  Matrix a;
  Vector c;
};

LinearSystem linear_system(const MomentSpec& spec, const NCDataset& data) {
  const DesignMatrices d = design_matrices(spec, data);
  const double n = static_cast<double>(data.n());
  const Index dq = spec.instruments().dim();
  const Index dg = spec.gamma_dim();
  LinearSystem s;
  s.a = Matrix::Zero(spec.moment_dim(), spec.theta_dim());
  s.c = Vector::Zero(spec.moment_dim());
  s.a.topLeftCorner(dq, dg) = d.q.transpose() * d.phi / n;
  s.c.head(dq) = d.q.transpose() * data.y() / n;
  if (spec.contrast()) {
    s.a.block(dq, 0, 1, dg) = d.contrast_phi.colwise().mean();
    s.a(dq, dg) = -1.0;
  }
  return s;
}

Vector default_start(const MomentSpec& spec, const NCDataset& data) {
  const auto& bridge = spec.bridge();
  Vector theta = Vector::Zero(spec.theta_dim());
  if (bridge.kind() != BridgeKind::custom) {
    const DesignMatrices d = design_matrices(spec, data);
    Vector response = data.y();
    bool usable = true;
    if (bridge.kind() == BridgeKind::multiplicative) {
      usable = (response.array() > 0.0).all();
      if (usable) response = response.array().log().matrix();
    }
    if (usable) {
      try {
        theta.head(spec.gamma_dim()) = ols_fit(d.phi, response).coefficients;
      } catch (const Error&) {
        theta.head(spec.gamma_dim()).setZero();
      }
    }
  }
  if (const auto& c = spec.contrast()) {
    const std::span<const double> gamma(theta.data(), static_cast<std::size_t>(spec.gamma_dim()));
    double total = 0.0;
    for (Index i = 0; i < data.n(); ++i) {
      const Observation obs = data.row(i);
      total += bridge.evaluate(obs, c->x1, gamma) - bridge.evaluate(obs, c->x0, gamma);
    }
    theta[spec.gamma_dim()] = total / static_cast<double>(data.n());
  }
  return theta;
}

Matrix nan_matrix(Index k) { return Matrix::Constant(k, k, std::numeric_limits<double>::quiet_NaN()); }

}  // namespace

HacConfig HacConfig::fixed(Index bandwidth) {
  if (bandwidth < 0) throw InvalidArgument("HAC bandwidth must be non-negative");
  HacConfig c;
  c.fixed_ = bandwidth;
  return c;
}

HacConfig HacConfig::rule(double c) {
  if (!(c >= 0.0) || !std::isfinite(c)) throw InvalidArgument("HAC bandwidth constant must be non-negative");
  HacConfig cfg;
  cfg.c_ = c;
  return cfg;
}

Index HacConfig::bandwidth(Index n) const {
  const Index b = fixed_ ? *fixed_ : static_cast<Index>(std::floor(c_ * std::cbrt(static_cast<double>(n))));
  if (b >= n) throw InvalidArgument("HAC bandwidth " + std::to_string(b) + " must be below n = " + std::to_string(n));
  return b;
}

std::string_view to_string(Solver s) { return s == Solver::linear_exact ? "linear_exact" : "quasi_newton"; }

double GmmFit::std_error(Index j) const { return std::sqrt(variance()(j, j)); }

Index GmmFit::index_of(const std::string& label) const {
  for (std::size_t j = 0; j < labels.size(); ++j)
    if (labels[j] == label) return static_cast<Index>(j);
  throw InvalidArgument("no parameter named '" + label + "'");
}

double gmm_objective(const MomentSpec& spec, const NCDataset& data, const Vector& theta, const Matrix& weight) {
  validate_weight(weight, spec.moment_dim());
  const Vector m = mean_moments(spec, data, theta);
  return m.dot(weight * m);
}

Matrix moment_jacobian_numeric(const MomentSpec& spec, const NCDataset& data, const Vector& theta) {
  if (!theta.allFinite()) throw InvalidArgument("moment_jacobian: non-finite theta");
  Matrix jac(spec.moment_dim(), spec.theta_dim());
  for (Index j = 0; j < theta.size(); ++j) {
    const double step = 1e-6 * std::max(1.0, std::abs(theta[j]));
    Vector up = theta, down = theta;
    up[j] += step;
    down[j] -= step;
    jac.col(j) = (mean_moments(spec, data, up) - mean_moments(spec, data, down)) / (2.0 * step);
  }
  if (!jac.allFinite()) throw StatisticalError("moment_jacobian: non-finite entries");
  return jac;
}

Matrix moment_jacobian(const MomentSpec& spec, const NCDataset& data, const Vector& theta) {
  if (theta.size() != spec.theta_dim()) throw InvalidArgument("moment_jacobian: theta has the wrong length");
  if (!spec.bridge().linear_in_parameters()) return moment_jacobian_numeric(spec, data, theta);
  if (!theta.allFinite()) throw InvalidArgument("moment_jacobian: non-finite theta");
  Matrix jac = -linear_system(spec, data).a;
  if (!jac.allFinite()) throw StatisticalError("moment_jacobian: non-finite entries");
  return jac;
}

Matrix long_run_covariance(const Matrix& h, Index bandwidth) {
  const Index n = h.rows();
  if (bandwidth < 0 || bandwidth >= n) throw InvalidArgument("HAC bandwidth must lie in [0, n)");
  Matrix sigma = h.transpose() * h / static_cast<double>(n);
  for (Index lag = 1; lag <= bandwidth; ++lag) {
    const Matrix gamma = h.bottomRows(n - lag).transpose() * h.topRows(n - lag) / static_cast<double>(n);
    const double weight = 1.0 - static_cast<double>(lag) / static_cast<double>(bandwidth + 1);
    sigma += weight * (gamma + gamma.transpose());
  }
  return sigma;
}

Matrix sandwich(const Matrix& jacobian, const Matrix& sigma0, const Matrix& weight, Index n) {
  const Matrix bread = jacobian.transpose() * weight * jacobian;
  Eigen::ColPivHouseholderQR<Matrix> qr(bread);
  qr.setThreshold(kRankTolerance);
  if (qr.rank() < bread.cols()) throw IdentificationError("singular M' Omega M in sandwich variance");
  const Matrix sigma1 = qr.solve(jacobian.transpose() * weight);
  Matrix v = sigma1 * sigma0 * sigma1.transpose() / static_cast<double>(n);
  return 0.5 * (v + v.transpose());
}

Matrix sandwich_variance(const MomentSpec& spec, const NCDataset& data, const Vector& theta, const Matrix& weight) {
  if (!theta.allFinite()) throw InvalidArgument("sandwich_variance: non-finite theta");
  validate_weight(weight, spec.moment_dim());
  const Matrix h = moment_function(spec, data, theta);
  return sandwich(moment_jacobian(spec, data, theta), long_run_covariance(h, 0), weight, data.n());
}

Matrix sandwich_variance(const MomentSpec& spec, const NCDataset& data, const GmmFit& fit) {
  return sandwich_variance(spec, data, fit.theta, fit.weight);
}

Matrix hac_variance(const MomentSpec& spec, const NCDataset& data, const Vector& theta, const Matrix& weight,
                    const HacConfig& cfg) {
  if (!theta.allFinite()) throw InvalidArgument("hac_variance: non-finite theta");
  validate_weight(weight, spec.moment_dim());
  const Matrix h = moment_function(spec, data, theta);
  return sandwich(moment_jacobian(spec, data, theta), long_run_covariance(h, cfg.bandwidth(data.n())), weight,
                  data.n());
}

Matrix hac_variance(const MomentSpec& spec, const NCDataset& data, const GmmFit& fit, const HacConfig& cfg) {
  return hac_variance(spec, data, fit.theta, fit.weight, cfg);
}

GmmFit gmm_fit(const MomentSpec& spec, const NCDataset& data, const GmmOptions& options) {
  const Index k = spec.theta_dim();
  const Index m = spec.moment_dim();
  if (data.n() <= k) throw InvalidArgument("gmm_fit: need more observations than parameters");

  GmmFit fit;
  fit.n = data.n();
  fit.labels = spec.parameter_labels();
  fit.weight = options.weight ? *options.weight : Matrix::Identity(m, m);
  validate_weight(fit.weight, m);

  if (spec.bridge().linear_in_parameters() && !options.force_quasi_newton) {
    const LinearSystem sys = linear_system(spec, data);
    if (!sys.a.allFinite() || !sys.c.allFinite()) throw StatisticalError("gmm_fit: non-finite moment system");
    Matrix lhs = sys.a;
    Vector rhs = sys.c;
    if (m != k) {
      const Matrix upper = Eigen::LLT<Matrix>(fit.weight).matrixU();
      lhs = upper * sys.a;
      rhs = upper * sys.c;
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(lhs);
    qr.setThreshold(kRankTolerance);
    if (qr.rank() < k) {
      throw IdentificationError("gmm_fit: singular moment Jacobian (weak instruments or collinear features)");
    }
    fit.theta = qr.solve(rhs);
    fit.solver = Solver::linear_exact;
    fit.converged = true;
    fit.iterations = 0;
  } else {
    const auto objective = [&](const Vector& theta) {
      const Vector mn = mean_moments(spec, data, theta);
      return mn.dot(fit.weight * mn);
    };
    const auto gradient = [&](const Vector& theta) -> Vector {
      const Vector mn = mean_moments(spec, data, theta);
      Matrix jac;
      try {
        jac = moment_jacobian(spec, data, theta);
      } catch (const StatisticalError&) {
        return Vector::Constant(theta.size(), std::numeric_limits<double>::quiet_NaN());
      }
      return 2.0 * jac.transpose() * fit.weight * mn;
    };
    Vector start = options.init ? *options.init : default_start(spec, data);
    if (start.size() != k) throw InvalidArgument("gmm_fit: init has the wrong length");
    const MinimizeResult r = bfgs_minimize(objective, gradient, std::move(start));
    fit.theta = r.x;
    fit.solver = Solver::quasi_newton;
    fit.converged = r.converged;
    fit.iterations = r.iterations;
  }

  fit.objective = gmm_objective(spec, data, fit.theta, fit.weight);
  try {
    fit.var_iid = sandwich_variance(spec, data, fit.theta, fit.weight);
    if (options.hac) {
      fit.hac_bandwidth = options.hac->bandwidth(data.n());
      fit.var_hac = hac_variance(spec, data, fit.theta, fit.weight, *options.hac);
    }
  } catch (const StatisticalError&) {
    if (fit.converged) throw;
    fit.var_iid = nan_matrix(k);
    if (options.hac) fit.var_hac = nan_matrix(k);
  } catch (const InvalidArgument&) {
    if (fit.converged) throw;
    fit.var_iid = nan_matrix(k);
    if (options.hac) fit.var_hac = nan_matrix(k);
  }
  return fit;
}

LinearGmmFit linear_gmm(const Matrix& regressors, const Vector& outcome, const Matrix& instruments,
                        const std::optional<HacConfig>& hac) {
  const Index n = regressors.rows();
  const Index k = regressors.cols();
  if (outcome.size() != n || instruments.rows() != n) throw InvalidArgument("linear_gmm: row count mismatch");
  if (instruments.cols() != k) throw InvalidArgument("linear_gmm: needs as many instruments as regressors");
  if (n <= k) throw InvalidArgument("linear_gmm: need more observations than regressors");
  if (!regressors.allFinite() || !outcome.allFinite() || !instruments.allFinite()) {
    throw InvalidArgument("linear_gmm: non-finite input");
  }

  const Matrix cross = instruments.transpose() * regressors / static_cast<double>(n);
  Eigen::ColPivHouseholderQR<Matrix> qr(cross);
  qr.setThreshold(kRankTolerance);
  if (qr.rank() < k) throw RankDeficientError("linear_gmm: singular instrument/regressor cross-moment matrix");

  LinearGmmFit fit;
  fit.coefficients = qr.solve(instruments.transpose() * outcome / static_cast<double>(n));
  fit.residuals = outcome - regressors * fit.coefficients;
  const Matrix h = instruments.array().colwise() * fit.residuals.array();
  const Matrix jac = -cross;
  const Matrix identity = Matrix::Identity(k, k);
  fit.var_iid = sandwich(jac, long_run_covariance(h, 0), identity, n);
  if (hac) {
    fit.hac_bandwidth = hac->bandwidth(n);
    fit.var_hac = sandwich(jac, long_run_covariance(h, *fit.hac_bandwidth), identity, n);
  }
  return fit;
}

}  // namespace ncbridge
