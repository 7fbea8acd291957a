#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace ncbridge {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One unit of the sample: exposure x, outcome y, negative control exposure z,
/// negative control outcome w and the covariate row v.
struct Observation {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double w = 0.0;
  std::span<const double> v;
};

/// Columnar sample (X, Y, Z, W, V). Immutable after construction; every column
/// has the same length n >= 2 and holds finite values only.
class NCDataset {
 public:
  NCDataset(Vector x, Vector y, Vector z, Vector w, RowMatrix v);
  NCDataset(Vector x, Vector y, Vector z, Vector w);

  Index n() const { return x_.size(); }
  Index p() const { return v_.cols(); }

  const Vector& x() const { return x_; }
  const Vector& y() const { return y_; }
  const Vector& z() const { return z_; }
  const Vector& w() const { return w_; }
  const RowMatrix& v() const { return v_; }

  Observation row(Index i) const;

  /// Rows in the given order (repetition allowed), e.g. for bootstrap resamples.
  NCDataset subset(std::span<const Index> rows) const;
  /// The sample stacked k times.
  NCDataset replicate(Index k) const;
  /// Copy with the outcome column replaced.
  NCDataset with_outcome(Vector y) const;

  friend bool operator==(const NCDataset& a, const NCDataset& b);

 private:
  Vector x_, y_, z_, w_;
  RowMatrix v_;
};

/// Plug-in covariance with divisor n.
double sample_cov(const Vector& a, const Vector& b);

enum class Variable { x, y, z, w };

/// Pairwise sample covariances of (X, Y, Z, W).
struct CovarianceSummary {
  double xx = 0, xy = 0, xz = 0, xw = 0;
  double yy = 0, zy = 0, yw = 0;
  double zz = 0, zw = 0, ww = 0;

  double operator()(Variable a, Variable b) const;
};

CovarianceSummary covariance_summary(const NCDataset& data);

struct OlsFit {
  Vector coefficients;
  Vector residuals;
  /// (D'D)^{-1}; multiply by a residual variance for classical standard errors.
  Matrix xtx_inverse;
};

/// Least squares via column-pivoted QR. Throws RankDeficientError when the
/// design rank falls below its column count (tolerance 1e-10 relative to the
/// largest pivot).
OlsFit ols_fit(const Matrix& design, const Vector& response);

struct LogisticFit {
  Vector coefficients;
  Vector fitted;  // pr(label = 1)
  Vector score;   // D'(labels - fitted) at the returned coefficients
  int iterations = 0;
  bool converged = false;
};

/// Bernoulli maximum likelihood by iteratively reweighted least squares.
LogisticFit logistic_fit(const Matrix& design, const Vector& labels);

/// Header-addressed numeric table read from a comma separated file.
class CsvTable {
 public:
  CsvTable(std::vector<std::string> header, std::vector<Vector> columns);

  const std::vector<std::string>& header() const { return header_; }
  Index rows() const { return rows_; }
  bool has(const std::string& name) const;
  const Vector& column(const std::string& name) const;

 private:
  std::vector<std::string> header_;
  std::vector<Vector> columns_;
  std::map<std::string, std::size_t> index_;
  Index rows_ = 0;
};

CsvTable read_csv_table(const std::filesystem::path& path);

/// Names of the CSV columns holding each role, plus columns to square-root at
/// ingestion (e.g. mortality counts).
struct ColumnMap {
  std::string x = "x";
  std::string y = "y";
  std::string z = "z";
  std::string w = "w";
  std::vector<std::string> v;
  std::set<std::string> sqrt_columns;
};

Vector take_column(const CsvTable& table, const std::string& name,
                   const std::set<std::string>& sqrt_columns);

NCDataset to_dataset(const CsvTable& table, const ColumnMap& columns);
NCDataset read_csv(const std::filesystem::path& path, const ColumnMap& columns);

/// Writes x,y,z,w,v0..v{p-1} (or the names in `columns`) with round-trip precision.
void write_csv(const NCDataset& data, const std::filesystem::path& path,
               const ColumnMap& columns = {});

}  // namespace ncbridge
