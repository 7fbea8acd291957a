#include <catch2/catch_amalgamated.hpp>

#include "ncbridge/bridge.hpp"
#include "ncbridge/errors.hpp"
#include "ncbridge/gmm.hpp"

#include <cmath>
#include <random>

using namespace ncbridge;
using Catch::Approx;

namespace {

MomentSpec linear_spec(const std::string& b, const std::string& q, Index p = 0,
                       std::optional<Contrast> contrast = std::nullopt,
                       BridgeKind kind = BridgeKind::linear) {
  return MomentSpec(BridgeModel(kind, FeatureMap::parse(b, p)), InstrumentMap(FeatureMap::parse(q, p)), contrast);
}

/// Confounded linear model with a valid pair of negative controls.
NCDataset confounded(std::mt19937_64& rng, Index n, bool binary_x = false) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  Vector x(n), y(n), z(n), w(n);
  RowMatrix v(n, 1);
  for (Index i = 0; i < n; ++i) {
    const double u = normal(rng);
    v(i, 0) = normal(rng);
    z[i] = 0.8 * u + 0.3 * v(i, 0) + normal(rng);
    const double lin = 0.5 * z[i] + u + 0.2 * v(i, 0);
    x[i] = binary_x ? (unif(rng) < 1.0 / (1.0 + std::exp(-lin)) ? 1.0 : 0.0) : lin + normal(rng);
    w[i] = 1.0 + u - 0.5 * v(i, 0) + normal(rng);
    y[i] = 0.5 + 1.2 * x[i] + 2.0 * u + 0.7 * v(i, 0) + 0.5 * x[i] * u + normal(rng);
  }
  return {x, y, z, w, v};
}

Matrix relative_gap(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().cwiseQuotient(b.cwiseAbs().cwiseMax(1e-300));
}

}  // namespace

TEST_CASE("gmm_objective hand examples") {
  Vector x = Vector::Zero(3), y = Vector::Ones(3), z = Vector::Constant(3, 2.0), w = Vector::Zero(3);
  const MomentSpec spec = linear_spec("1", "1, z");
  const Vector gamma = Vector::Zero(1);
  CHECK(gmm_objective(spec, NCDataset(x, y, z, w), gamma, Matrix::Identity(2, 2)) == Approx(5.0).epsilon(1e-14));

  const NCDataset d0(x, y, Vector::Zero(3), w);
  Matrix omega = Matrix::Zero(2, 2);
  omega.diagonal() << 4, 1;
  CHECK(gmm_objective(spec, d0, gamma, omega) == Approx(4.0).epsilon(1e-14));

  Matrix indefinite(2, 2);
  indefinite << 1, 2, 2, 1;
  CHECK_THROWS_AS(gmm_objective(spec, d0, gamma, indefinite), InvalidArgument);
  Matrix asymmetric(2, 2);
  asymmetric << 2, 1, 0, 2;
  CHECK_THROWS_AS(gmm_objective(spec, d0, gamma, asymmetric), InvalidArgument);
}

TEST_CASE("just-identified linear fit solves the moments exactly") {
  std::mt19937_64 rng(1);
  const NCDataset d = confounded(rng, 400);
  const MomentSpec spec = linear_spec("1, x, v[*], w", "1, x, v[*], z", 1);
  const GmmFit fit = gmm_fit(spec, d);
  CHECK(fit.solver == Solver::linear_exact);
  CHECK(fit.converged);
  CHECK(fit.objective < 1e-20);
  CHECK(gmm_objective(spec, d, fit.theta, Matrix::Identity(4, 4)) < 1e-20);
  CHECK(mean_moments(spec, d, fit.theta).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("structural fit reduces to the IV ratio when cov(z, w) is zero") {
  std::mt19937_64 rng(2);
  const NCDataset raw = confounded(rng, 300);
  const Vector zc = raw.z().array() - raw.z().mean();
  const Vector w = raw.w() - (sample_cov(raw.z(), raw.w()) / sample_cov(raw.z(), raw.z())) * zc;
  const NCDataset d(raw.x(), raw.y(), raw.z(), w);
  REQUIRE(std::abs(sample_cov(d.z(), d.w())) < 1e-12);
  const GmmFit fit = gmm_fit(linear_spec("1, x, w", "1, x, z"), d);
  CHECK(fit.theta[1] == Approx(sample_cov(d.z(), d.y()) / sample_cov(d.x(), d.z())).epsilon(1e-10));
}

TEST_CASE("noiseless data recover the bridge parameters") {
  std::mt19937_64 rng(3);
  const NCDataset base = confounded(rng, 200);
  Vector gamma(3);
  gamma << 0.2, -0.4, 0.3;

  const Vector y_lin = gamma[0] + gamma[1] * base.x().array() + gamma[2] * base.w().array();
  const GmmFit lin = gmm_fit(linear_spec("1, x, w", "1, x, z"), base.with_outcome(y_lin));
  CHECK((lin.theta - gamma).cwiseAbs().maxCoeff() < 1e-8);

  const Vector y_exp = y_lin.array().exp();
  const MomentSpec mult = linear_spec("1, x, w", "1, x, z", 0, std::nullopt, BridgeKind::multiplicative);
  const GmmFit fit = gmm_fit(mult, base.with_outcome(y_exp));
  CHECK(fit.solver == Solver::quasi_newton);
  CHECK(fit.converged);
  CHECK((fit.theta - gamma).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("exact and quasi-Newton solutions agree on linear bridges") {
  std::mt19937_64 rng(4);
  const NCDataset cont = confounded(rng, 500);
  const NCDataset bin = confounded(rng, 800, true);
  struct Case {
    MomentSpec spec;
    const NCDataset* data;
  };
  const std::vector<Case> cases{
      {linear_spec("1, x, w", "1, x, z"), &cont},
      {linear_spec("1, x, v[*], w", "1, x, v[*], z", 1), &cont},
      {linear_spec("1, x, w", "1, x, z, v[0], z*v[0]", 1), &cont},
      {linear_spec("1, x, v[*], w, x*v[*], x*w", "1, x, v[*], z, x*v[*], x*z", 1, Contrast{}), &bin},
  };
  for (const auto& c : cases) {
    const GmmFit exact = gmm_fit(c.spec, *c.data);
    GmmOptions opts;
    opts.force_quasi_newton = true;
    const GmmFit qn = gmm_fit(c.spec, *c.data, opts);
    CHECK(exact.solver == Solver::linear_exact);
    CHECK(qn.solver == Solver::quasi_newton);
    CHECK(qn.converged);
    CHECK((exact.theta - qn.theta).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("over-identified fit minimizes the objective") {
  std::mt19937_64 rng(5);
  const NCDataset d = confounded(rng, 400);
  const MomentSpec spec = linear_spec("1, x, w", "1, x, z, v[0], z*v[0]", 1);
  const GmmFit fit = gmm_fit(spec, d);
  const Matrix omega = Matrix::Identity(spec.moment_dim(), spec.moment_dim());
  const double best = gmm_objective(spec, d, fit.theta, omega);
  CHECK(best == Approx(fit.objective).epsilon(1e-10));
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 100; ++rep) {
    Vector e(fit.theta.size());
    for (Index j = 0; j < e.size(); ++j) e[j] = normal(rng);
    e *= 0.1 / e.norm();
    CHECK(best <= gmm_objective(spec, d, fit.theta + e, omega));
  }
}

TEST_CASE("analytic and finite-difference Jacobians agree") {
  std::mt19937_64 rng(6);
  const NCDataset d = confounded(rng, 300, true);
  const MomentSpec spec = linear_spec("1, x, v[*], w, x*v[*], x*w", "1, x, v[*], z, x*v[*], x*z", 1, Contrast{});
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 5; ++rep) {
    Vector theta(spec.theta_dim());
    for (Index j = 0; j < theta.size(); ++j) theta[j] = 3.0 * normal(rng);
    const Matrix a = moment_jacobian(spec, d, theta);
    const Matrix f = moment_jacobian_numeric(spec, d, theta);
    CHECK((a - f).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(a(spec.moment_dim() - 1, spec.theta_dim() - 1) == 1.0);
  }
}

TEST_CASE("multiplicative Jacobian at zero is the linear pattern") {
  std::mt19937_64 rng(7);
  const NCDataset d = confounded(rng, 200);
  const MomentSpec mult = linear_spec("1, x, w", "1, x, z", 0, std::nullopt, BridgeKind::multiplicative);
  const DesignMatrices dm = design_matrices(mult, d);
  const Matrix expected = -(dm.q.transpose() * dm.phi) / static_cast<double>(d.n());
  const Matrix jac = moment_jacobian(mult, d, Vector::Zero(3));
  CHECK((jac - expected).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("just-identified sandwich equals the classical IV sandwich") {
  std::mt19937_64 rng(8);
  const NCDataset d = confounded(rng, 400);
  const MomentSpec spec = linear_spec("1, x, w", "1, x, z");
  const GmmFit fit = gmm_fit(spec, d);
  const Matrix a = moment_jacobian(spec, d, fit.theta);
  const Matrix h = moment_function(spec, d, fit.theta);
  const Matrix s0 = h.transpose() * h / static_cast<double>(d.n());
  const Matrix ainv = a.inverse();
  const Matrix classical = ainv * s0 * ainv.transpose() / static_cast<double>(d.n());
  CHECK(relative_gap(fit.var_iid, classical).maxCoeff() < 1e-10);
}

TEST_CASE("replicating the data divides the variance") {
  std::mt19937_64 rng(9);
  const NCDataset d = confounded(rng, 300, true);
  const MomentSpec spec = linear_spec("1, x, v[*], w, x*v[*], x*w", "1, x, v[*], z, x*v[*], x*z", 1, Contrast{});
  const GmmFit one = gmm_fit(spec, d);
  for (Index k : {2, 3}) {
    const GmmFit many = gmm_fit(spec, d.replicate(k));
    CHECK(relative_gap(many.var_iid * static_cast<double>(k), one.var_iid).maxCoeff() < 1e-10);
  }
}

TEST_CASE("zero residuals give a zero sandwich") {
  std::mt19937_64 rng(10);
  const NCDataset base = confounded(rng, 100);
  const Vector y = 1.0 + 2.0 * base.x().array() - base.w().array();
  const MomentSpec spec = linear_spec("1, x, w", "1, x, z");
  const NCDataset d = base.with_outcome(y);
  Vector truth(3);
  truth << 1, 2, -1;
  CHECK(sandwich_variance(spec, d, truth, Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("Newey-West long-run covariance") {
  Matrix h(3, 1);
  h << 1, 2, 3;
  CHECK(long_run_covariance(h, 1)(0, 0) == Approx(22.0 / 3.0).epsilon(1e-15));
  CHECK(long_run_covariance(h, 0)(0, 0) == Approx(14.0 / 3.0).epsilon(1e-15));

  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  const Index n = 100000;
  Matrix iid(n, 2);
  for (Index i = 0; i < n; ++i) {
    iid(i, 0) = normal(rng);
    iid(i, 1) = 0.5 * iid(i, 0) + normal(rng);
  }
  const Matrix plain = long_run_covariance(iid, 0);
  const Matrix hac = long_run_covariance(iid, 10);
  CHECK(((hac - plain).cwiseAbs().array() / plain.cwiseAbs().array()).maxCoeff() < 0.05);
}

TEST_CASE("HAC variance with zero lags equals the sandwich") {
  std::mt19937_64 rng(12);
  const NCDataset d = confounded(rng, 250, true);
  const MomentSpec spec = linear_spec("1, x, v[*], w, x*v[*], x*w", "1, x, v[*], z, x*v[*], x*z", 1, Contrast{});
  const GmmFit fit = gmm_fit(spec, d);
  const Matrix hac0 = hac_variance(spec, d, fit, HacConfig::fixed(0));
  CHECK(hac0 == fit.var_iid);
  GmmOptions opts;
  opts.hac = HacConfig::fixed(5);
  const GmmFit with_hac = gmm_fit(spec, d, opts);
  REQUIRE(with_hac.var_hac);
  const Matrix& v = *with_hac.var_hac;
  CHECK((v - v.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(v.diagonal().minCoeff() >= 0.0);
  CHECK(with_hac.hac_bandwidth == 5);
}

TEST_CASE("HAC bandwidth rule") {
  CHECK(HacConfig::rule().bandwidth(1500) == 14);
  CHECK(HacConfig::fixed(10).bandwidth(1500) == 10);
  CHECK_THROWS_AS(HacConfig::fixed(5).bandwidth(5), InvalidArgument);
}

TEST_CASE("collinear instruments give an identification error") {
  std::mt19937_64 rng(13);
  const NCDataset raw = confounded(rng, 100);
  const NCDataset d(raw.x(), raw.y(), Vector::Constant(100, 2.0), raw.w());
  CHECK_THROWS_AS(gmm_fit(linear_spec("1, x, w", "1, x, z"), d), IdentificationError);
}

TEST_CASE("linear_gmm with own instruments is OLS") {
  std::mt19937_64 rng(14);
  const NCDataset d = confounded(rng, 200);
  Matrix design(d.n(), 2);
  design.col(0).setOnes();
  design.col(1) = d.x();
  const LinearGmmFit fit = linear_gmm(design, d.y(), design);
  const OlsFit ols = ols_fit(design, d.y());
  CHECK((fit.coefficients - ols.coefficients).cwiseAbs().maxCoeff() < 1e-10);
  const Matrix meat = design.transpose() * fit.residuals.asDiagonal() * fit.residuals.asDiagonal() * design;
  const Matrix hc0 = ols.xtx_inverse * meat * ols.xtx_inverse;
  CHECK(relative_gap(fit.var_iid, hc0).maxCoeff() < 1e-9);
}
