#include "ncbridge/data.hpp"

#include "ncbridge/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace ncbridge {

namespace {

void require_finite(const Eigen::Ref<const Matrix>& values, const char* name) {
  if (!values.allFinite()) {
    throw InvalidArgument(std::string("non-finite value in column ") + name);
  }
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

NCDataset::NCDataset(Vector x, Vector y, Vector z, Vector w, RowMatrix v)
    : x_(std::move(x)), y_(std::move(y)), z_(std::move(z)), w_(std::move(w)), v_(std::move(v)) {
  const Index n = x_.size();
  if (y_.size() != n || z_.size() != n || w_.size() != n) {
    throw InvalidArgument("dataset columns differ in length");
  }
  if (v_.size() == 0) v_.resize(n, v_.cols());
  if (v_.rows() != n) throw InvalidArgument("covariate matrix row count differs from n");
  if (n < 2) throw InvalidArgument("dataset needs at least two rows");
  require_finite(x_, "x");
  require_finite(y_, "y");
  require_finite(z_, "z");
  require_finite(w_, "w");
  if (!v_.allFinite()) throw InvalidArgument("non-finite value in covariates");
}

NCDataset::NCDataset(Vector x, Vector y, Vector z, Vector w)
    : NCDataset(std::move(x), std::move(y), std::move(z), std::move(w), RowMatrix()) {}

Observation NCDataset::row(Index i) const {
  return {x_[i], y_[i], z_[i], w_[i],
          std::span<const double>(v_.data() + i * v_.cols(), static_cast<std::size_t>(v_.cols()))};
}

NCDataset NCDataset::subset(std::span<const Index> rows) const {
  const auto m = static_cast<Index>(rows.size());
  Vector x(m), y(m), z(m), w(m);
  RowMatrix v(m, p());
  for (Index i = 0; i < m; ++i) {
    const Index r = rows[static_cast<std::size_t>(i)];
    if (r < 0 || r >= n()) throw InvalidArgument("subset row out of range");
    x[i] = x_[r];
    y[i] = y_[r];
    z[i] = z_[r];
    w[i] = w_[r];
    v.row(i) = v_.row(r);
  }
  return {std::move(x), std::move(y), std::move(z), std::move(w), std::move(v)};
}

NCDataset NCDataset::replicate(Index k) const {
  if (k < 1) throw InvalidArgument("replication factor must be positive");
  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(k * n()));
  for (Index r = 0; r < k; ++r)
    for (Index i = 0; i < n(); ++i) rows.push_back(i);
  return subset(rows);
}

NCDataset NCDataset::with_outcome(Vector y) const { return {x_, std::move(y), z_, w_, v_}; }

bool operator==(const NCDataset& a, const NCDataset& b) {
  return a.x_ == b.x_ && a.y_ == b.y_ && a.z_ == b.z_ && a.w_ == b.w_ && a.v_.rows() == b.v_.rows() &&
         a.v_.cols() == b.v_.cols() && a.v_ == b.v_;
}

double sample_cov(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw InvalidArgument("sample_cov: length mismatch");
  if (a.size() < 2) throw InvalidArgument("sample_cov: need at least two values");
  if (!a.allFinite() || !b.allFinite()) throw InvalidArgument("sample_cov: non-finite input");
  const double n = static_cast<double>(a.size());
  return ((a.array() - a.mean()) * (b.array() - b.mean())).sum() / n;
}

double CovarianceSummary::operator()(Variable a, Variable b) const {
  if (a > b) std::swap(a, b);
  using V = Variable;
  switch (a) {
    case V::x:
      switch (b) {
        case V::x: return xx;
        case V::y: return xy;
        case V::z: return xz;
        case V::w: return xw;
      }
      break;
    case V::y:
      switch (b) {
        case V::y: return yy;
        case V::z: return zy;
        case V::w: return yw;
        default: break;
      }
      break;
    case V::z:
      return b == V::z ? zz : zw;
    case V::w:
      return ww;
  }
  return 0.0;
}

CovarianceSummary covariance_summary(const NCDataset& d) {
  CovarianceSummary s;
  s.xx = sample_cov(d.x(), d.x());
  s.xy = sample_cov(d.x(), d.y());
  s.xz = sample_cov(d.x(), d.z());
  s.xw = sample_cov(d.x(), d.w());
  s.yy = sample_cov(d.y(), d.y());
  s.zy = sample_cov(d.z(), d.y());
  s.yw = sample_cov(d.y(), d.w());
  s.zz = sample_cov(d.z(), d.z());
  s.zw = sample_cov(d.z(), d.w());
  s.ww = sample_cov(d.w(), d.w());
  return s;
}

OlsFit ols_fit(const Matrix& design, const Vector& response) {
  if (design.rows() != response.size()) throw InvalidArgument("ols_fit: design/response size mismatch");
  if (design.rows() <= design.cols()) throw InvalidArgument("ols_fit: need more rows than columns");
  if (!design.allFinite() || !response.allFinite()) throw InvalidArgument("ols_fit: non-finite input");

  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < design.cols()) {
    throw RankDeficientError("ols_fit: design has rank " + std::to_string(qr.rank()) + " < " +
                             std::to_string(design.cols()) + " columns");
  }
  OlsFit fit;
  fit.coefficients = qr.solve(response);
  fit.residuals = response - design * fit.coefficients;

  const Index k = design.cols();
  Matrix r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  Matrix r_inv = r.triangularView<Eigen::Upper>().solve(Matrix::Identity(k, k));
  // (D'D)^{-1} = P R^{-1} R^{-T} P'
  Matrix unpermuted = r_inv * r_inv.transpose();
  fit.xtx_inverse = qr.colsPermutation() * unpermuted * qr.colsPermutation().transpose();
  return fit;
}

LogisticFit logistic_fit(const Matrix& design, const Vector& labels) {
  if (design.rows() != labels.size()) throw InvalidArgument("logistic_fit: size mismatch");
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0.0 && labels[i] != 1.0) throw InvalidArgument("logistic_fit: labels must be 0 or 1");
  }
  const double ones = labels.sum();
  if (ones == 0.0 || ones == static_cast<double>(labels.size())) {
    throw SingleClassError("logistic_fit: only one class present");
  }

  constexpr int kMaxIter = 100;
  constexpr double kScoreTol = 1e-8;
  constexpr double kDivergence = 1e6;
  constexpr double kPerfectFit = 1e-6;

  const Index k = design.cols();
  LogisticFit fit;
  fit.coefficients = Vector::Zero(k);
  for (int it = 0; it < kMaxIter; ++it) {
    const Vector eta = design * fit.coefficients;
    fit.fitted = (1.0 + (-eta.array()).exp()).inverse().matrix();
    fit.score = design.transpose() * (labels - fit.fitted);
    fit.iterations = it;
    if ((labels - fit.fitted).lpNorm<Eigen::Infinity>() < kPerfectFit) {
      throw SeparationError("logistic_fit: fitted probabilities reproduce the labels (perfect separation)");
    }
    if (fit.score.lpNorm<Eigen::Infinity>() < kScoreTol) {
      fit.converged = true;
      return fit;
    }
    const Vector weights = (fit.fitted.array() * (1.0 - fit.fitted.array())).max(1e-300).matrix();
    const Matrix info = design.transpose() * weights.asDiagonal() * design;
    Eigen::LDLT<Matrix> ldlt(info);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14) {
      if (fit.coefficients.norm() > 1e3) throw SeparationError("logistic_fit: perfect separation");
      throw RankDeficientError("logistic_fit: singular information matrix");
    }
    fit.coefficients += ldlt.solve(fit.score);
    if (!fit.coefficients.allFinite() || fit.coefficients.norm() > kDivergence) {
      throw SeparationError("logistic_fit: coefficients diverge (perfect separation)");
    }
  }
  const Vector eta = design * fit.coefficients;
  fit.fitted = (1.0 + (-eta.array()).exp()).inverse().matrix();
  fit.score = design.transpose() * (labels - fit.fitted);
  fit.iterations = kMaxIter;
  fit.converged = fit.score.lpNorm<Eigen::Infinity>() < kScoreTol;
  return fit;
}

CsvTable::CsvTable(std::vector<std::string> header, std::vector<Vector> columns)
    : header_(std::move(header)), columns_(std::move(columns)) {
  if (header_.size() != columns_.size()) throw InvalidArgument("csv header/column count mismatch");
  for (std::size_t j = 0; j < header_.size(); ++j) {
    if (!index_.emplace(header_[j], j).second) throw DataError("duplicate csv column '" + header_[j] + "'");
  }
  rows_ = columns_.empty() ? 0 : columns_.front().size();
}

bool CsvTable::has(const std::string& name) const { return index_.count(name) > 0; }

const Vector& CsvTable::column(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw DataError("missing column '" + name + "'");
  return columns_[it->second];
}

CsvTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path.string() + "' is empty");
  const auto header = split_fields(line);
  std::vector<std::vector<double>> cells(header.size());

  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError("line " + std::to_string(row + 1) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const auto& f = fields[j];
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
      if (ec != std::errc() || ptr != f.data() + f.size() || f.empty()) {
        throw DataError("line " + std::to_string(row + 1) + ", column '" + header[j] + "': cannot parse '" + f +
                        "'");
      }
      if (!std::isfinite(value)) {
        throw DataError("line " + std::to_string(row + 1) + ", column '" + header[j] + "': non-finite value");
      }
      cells[j].push_back(value);
    }
  }

  std::vector<Vector> columns;
  columns.reserve(cells.size());
  for (auto& c : cells) columns.emplace_back(Eigen::Map<Vector>(c.data(), static_cast<Index>(c.size())));
  return {header, std::move(columns)};
}

Vector take_column(const CsvTable& table, const std::string& name, const std::set<std::string>& sqrt_columns) {
  Vector col = table.column(name);
  if (sqrt_columns.count(name)) {
    if ((col.array() < 0.0).any()) throw DataError("sqrt transform on negative value in column '" + name + "'");
    col = col.cwiseSqrt();
  }
  return col;
}

NCDataset to_dataset(const CsvTable& table, const ColumnMap& columns) {
  for (const auto& s : columns.sqrt_columns) {
    if (!table.has(s)) throw DataError("missing column '" + s + "'");
  }
  auto x = take_column(table, columns.x, columns.sqrt_columns);
  auto y = take_column(table, columns.y, columns.sqrt_columns);
  auto z = take_column(table, columns.z, columns.sqrt_columns);
  auto w = take_column(table, columns.w, columns.sqrt_columns);
  RowMatrix v(table.rows(), static_cast<Index>(columns.v.size()));
  for (std::size_t j = 0; j < columns.v.size(); ++j) {
    v.col(static_cast<Index>(j)) = take_column(table, columns.v[j], columns.sqrt_columns);
  }
  return {std::move(x), std::move(y), std::move(z), std::move(w), std::move(v)};
}

NCDataset read_csv(const std::filesystem::path& path, const ColumnMap& columns) {
  return to_dataset(read_csv_table(path), columns);
}

void write_csv(const NCDataset& data, const std::filesystem::path& path, const ColumnMap& columns) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << columns.x << ',' << columns.y << ',' << columns.z << ',' << columns.w;
  for (Index j = 0; j < data.p(); ++j) {
    const auto u = static_cast<std::size_t>(j);
    out << ',' << (u < columns.v.size() ? columns.v[u] : "v" + std::to_string(j));
  }
  out << '\n';
  for (Index i = 0; i < data.n(); ++i) {
    out << data.x()[i] << ',' << data.y()[i] << ',' << data.z()[i] << ',' << data.w()[i];
    for (Index j = 0; j < data.p(); ++j) out << ',' << data.v()(i, j);
    out << '\n';
  }
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

}  // namespace ncbridge
