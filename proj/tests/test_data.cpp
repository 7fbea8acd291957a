#include <catch2/catch_amalgamated.hpp>

#include "ncbridge/data.hpp"
#include "ncbridge/errors.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>

using namespace ncbridge;
using Catch::Approx;

namespace {

std::string tmp_path(const std::string& name) { return std::string(NCBRIDGE_TEST_TMP) + "/" + name; }

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double d : v) out[i++] = d;
  return out;
}

}  // namespace

TEST_CASE("sample_cov uses divisor n") {
  CHECK(sample_cov(vec({1, 2, 3}), vec({1, 2, 3})) == Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(sample_cov(vec({1, 2, 3}), vec({3, 3, 3})) == Approx(0.0).margin(1e-15));
  CHECK(sample_cov(vec({1, -1}), vec({-1, 1})) == Approx(-1.0).epsilon(1e-14));
}

TEST_CASE("sample_cov rejects bad input") {
  CHECK_THROWS_AS(sample_cov(vec({1, 2}), vec({1, 2, 3})), InvalidArgument);
  CHECK_THROWS_AS(sample_cov(vec({1}), vec({1})), InvalidArgument);
  CHECK_THROWS_AS(sample_cov(vec({1, std::numeric_limits<double>::quiet_NaN()}), vec({1, 2})), InvalidArgument);
}

TEST_CASE("sample variance of Gaussian draws is within Monte Carlo error") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 2.0);
  const Index n = 20000;
  Vector a(n);
  for (Index i = 0; i < n; ++i) a[i] = normal(rng);
  // var of the plug-in variance of N(0, s^2) is about 2 s^4 / n
  const double se = std::sqrt(2.0 * 16.0 / static_cast<double>(n));
  CHECK(std::abs(sample_cov(a, a) - 4.0) < 4.0 * se);
}

TEST_CASE("covariance summary is symmetric with non-negative variances") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  const Index n = 50;
  Vector x(n), y(n), z(n), w(n);
  for (Index i = 0; i < n; ++i) {
    x[i] = normal(rng);
    y[i] = x[i] + normal(rng);
    z[i] = normal(rng);
    w[i] = z[i] - x[i];
  }
  const NCDataset d(x, y, z, w);
  const CovarianceSummary s = covariance_summary(d);
  const Variable vars[] = {Variable::x, Variable::y, Variable::z, Variable::w};
  for (Variable a : vars) {
    CHECK(s(a, a) >= 0.0);
    for (Variable b : vars) CHECK(s(a, b) == s(b, a));
  }
  CHECK(s.zy == Approx(sample_cov(z, y)));
}

TEST_CASE("dataset construction validates columns") {
  CHECK_THROWS_AS(NCDataset(vec({1, 2}), vec({1, 2}), vec({1, 2}), vec({1})), InvalidArgument);
  CHECK_THROWS_AS(NCDataset(vec({1}), vec({1}), vec({1}), vec({1})), InvalidArgument);
  CHECK_THROWS_AS(NCDataset(vec({1, std::numeric_limits<double>::infinity()}), vec({1, 2}), vec({1, 2}), vec({1, 2})),
                  InvalidArgument);
  const NCDataset d(vec({1, 2}), vec({3, 4}), vec({5, 6}), vec({7, 8}));
  CHECK(d.n() == 2);
  CHECK(d.p() == 0);
  CHECK(d.replicate(3).n() == 6);
}

TEST_CASE("ols_fit examples") {
  Matrix d(3, 2);
  d << 1, 0, 1, 1, 1, 2;
  const OlsFit fit = ols_fit(d, vec({1, 3, 5}));
  CHECK(fit.coefficients[0] == Approx(1.0).epsilon(1e-12));
  CHECK(fit.coefficients[1] == Approx(2.0).epsilon(1e-12));

  const OlsFit constant = ols_fit(Matrix::Ones(3, 1), vec({4, 4, 4}));
  CHECK(constant.coefficients[0] == Approx(4.0).epsilon(1e-14));

  CHECK_THROWS_AS(ols_fit(Matrix::Ones(3, 2), vec({1, 2, 3})), RankDeficientError);
}

TEST_CASE("ols_fit recovers noiseless coefficients and leaves orthogonal residuals") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  const Index n = 200, k = 5;
  Matrix d(n, k);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < k; ++j) d(i, j) = j == 0 ? 1.0 : normal(rng);
  Vector beta(k);
  beta << 0.5, -1.0, 2.0, 0.25, 3.0;
  const OlsFit exact = ols_fit(d, d * beta);
  CHECK((exact.coefficients - beta).cwiseAbs().maxCoeff() < 1e-10);

  Vector y = d * beta;
  for (Index i = 0; i < n; ++i) y[i] += normal(rng);
  const OlsFit noisy = ols_fit(d, y);
  CHECK((d.transpose() * noisy.residuals).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((noisy.xtx_inverse - (d.transpose() * d).inverse()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("logistic_fit examples") {
  const Matrix one = Matrix::Ones(4, 1);
  CHECK(logistic_fit(one, vec({0, 1, 0, 1})).coefficients[0] == Approx(0.0).margin(1e-10));
  CHECK(logistic_fit(one, vec({1, 1, 0, 1})).coefficients[0] == Approx(std::log(3.0)).epsilon(1e-10));
  CHECK_THROWS_AS(logistic_fit(one, vec({1, 1, 1, 1})), SingleClassError);
}

TEST_CASE("logistic_fit score vanishes at the estimate") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  const Index n = 2000;
  Matrix d(n, 3);
  Vector labels(n);
  for (Index i = 0; i < n; ++i) {
    d(i, 0) = 1.0;
    d(i, 1) = normal(rng);
    d(i, 2) = normal(rng);
    const double p = 1.0 / (1.0 + std::exp(-(0.3 + d(i, 1) - 0.5 * d(i, 2))));
    labels[i] = unif(rng) < p ? 1.0 : 0.0;
  }
  const LogisticFit fit = logistic_fit(d, labels);
  CHECK(fit.converged);
  CHECK(fit.score.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("logistic_fit reports perfect separation") {
  Matrix d(6, 2);
  d << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
  CHECK_THROWS_AS(logistic_fit(d, vec({0, 0, 0, 1, 1, 1})), SeparationError);
}

TEST_CASE("read_csv parses, maps columns and applies sqrt") {
  const std::string path = tmp_path("basic.csv");
  write_file(path, "x,y,z,w\n1,4,0,2\n0,9,1,3\n1,16,1,5\n");
  ColumnMap cols;
  const NCDataset d = read_csv(path, cols);
  CHECK(d.n() == 3);
  CHECK(d.p() == 0);
  CHECK(d.y()[1] == 9.0);

  cols.sqrt_columns = {"y"};
  const NCDataset s = read_csv(path, cols);
  CHECK(s.y()[0] == 2.0);
  CHECK(s.y()[1] == 3.0);

  ColumnMap missing;
  missing.v = {"u"};
  CHECK_THROWS_AS(read_csv(path, missing), DataError);
}

TEST_CASE("read_csv reports the row and column of bad cells") {
  const std::string path = tmp_path("bad.csv");
  write_file(path, "x,y,z,w\n1,2,3,4\n1,abc,3,4\n");
  try {
    read_csv(path, {});
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    const std::string what = e.what();
    CHECK(what.find("y") != std::string::npos);
    CHECK(what.find('3') != std::string::npos);
  }
  write_file(path, "x,y,z,w\n1,2,3,4\n1,inf,3,4\n");
  CHECK_THROWS_AS(read_csv(path, {}), DataError);
  CHECK_THROWS_AS(read_csv(tmp_path("does_not_exist.csv"), {}), DataError);
}

TEST_CASE("write_csv then read_csv round-trips exactly") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal;
  const Index n = 40;
  Vector x(n), y(n), z(n), w(n);
  RowMatrix v(n, 2);
  for (Index i = 0; i < n; ++i) {
    x[i] = normal(rng);
    y[i] = normal(rng) * 1e-7;
    z[i] = normal(rng) * 1e9;
    w[i] = normal(rng);
    v(i, 0) = normal(rng);
    v(i, 1) = 1.0 / 3.0 + i;
  }
  const NCDataset d(x, y, z, w, v);
  const std::string path = tmp_path("roundtrip.csv");
  ColumnMap cols;
  cols.v = {"age", "dose"};
  write_csv(d, path, cols);
  const NCDataset back = read_csv(path, cols);
  CHECK(back == d);
}
