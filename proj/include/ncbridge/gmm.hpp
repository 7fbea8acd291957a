#pragma once

#include "ncbridge/bridge.hpp"
#include "ncbridge/data.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ncbridge {

/// Newey-West bandwidth: a fixed lag count, or floor(c * n^{1/3}).
class HacConfig {
 public:
  static HacConfig fixed(Index bandwidth);
  static HacConfig rule(double c = 1.3);

  /// Bandwidth for a sample of size n; throws InvalidArgument unless < n.
  Index bandwidth(Index n) const;
  bool is_fixed() const { return fixed_.has_value(); }
  double constant() const { return c_; }

 private:
  std::optional<Index> fixed_;
  double c_ = 1.3;
};

enum class Solver { linear_exact, quasi_newton };
std::string_view to_string(Solver s);

struct GmmFit {
  Vector theta;
  std::vector<std::string> labels;
  double objective = 0.0;
  Matrix weight;
  Matrix var_iid;
  std::optional<Matrix> var_hac;
  std::optional<Index> hac_bandwidth;
  bool converged = false;
  int iterations = 0;
  Solver solver = Solver::linear_exact;
  Index n = 0;

  /// HAC variance when present, otherwise the i.i.d. sandwich.
  const Matrix& variance() const { return var_hac ? *var_hac : var_iid; }
  double std_error(Index j) const;
  Index index_of(const std::string& label) const;
};

struct GmmOptions {
  std::optional<Matrix> weight;     // identity when absent
  std::optional<Vector> init;       // quasi-Newton start
  std::optional<HacConfig> hac;     // also fill var_hac
  bool force_quasi_newton = false;  // skip the closed form for linear bridges
};

/// m_n(theta)' Omega m_n(theta). Throws InvalidArgument when Omega is not
/// symmetric positive definite.
double gmm_objective(const MomentSpec& spec, const NCDataset& data, const Vector& theta, const Matrix& weight);

/// Linear bridges are solved in closed form (exactly when just identified,
/// by weighted least squares on the stacked moments otherwise). Other bridges
/// use quasi-Newton minimization from `init` (default: least squares seed for
/// gamma, contrast at the seed). Singular moment Jacobians throw
/// IdentificationError; optimizer non-convergence is reported in the fit.
GmmFit gmm_fit(const MomentSpec& spec, const NCDataset& data, const GmmOptions& options = {});

/// d m_n / d theta'. Analytic for linear bridges, central differences with
/// step 1e-6 * max(1, |theta_j|) otherwise.
Matrix moment_jacobian(const MomentSpec& spec, const NCDataset& data, const Vector& theta);
Matrix moment_jacobian_numeric(const MomentSpec& spec, const NCDataset& data, const Vector& theta);

/// Sigma0 = (1/n) sum h_i h_i' plus Bartlett-weighted lag terms up to `bandwidth`.
Matrix long_run_covariance(const Matrix& h, Index bandwidth);

/// Sigma1 Sigma0 Sigma1' / n with Sigma1 = (M' Omega M)^{-1} M' Omega.
Matrix sandwich(const Matrix& jacobian, const Matrix& sigma0, const Matrix& weight, Index n);

Matrix sandwich_variance(const MomentSpec& spec, const NCDataset& data, const Vector& theta, const Matrix& weight);
Matrix sandwich_variance(const MomentSpec& spec, const NCDataset& data, const GmmFit& fit);
Matrix hac_variance(const MomentSpec& spec, const NCDataset& data, const Vector& theta, const Matrix& weight,
                    const HacConfig& cfg);
Matrix hac_variance(const MomentSpec& spec, const NCDataset& data, const GmmFit& fit, const HacConfig& cfg);

/// Just-identified linear instrumental-variable fit on raw matrices:
/// E[instruments' (outcome - regressors * beta)] = 0. With instruments equal
/// to regressors this is OLS with a robust (HAC when requested) sandwich.
struct LinearGmmFit {
  Vector coefficients;
  Vector residuals;
  Matrix var_iid;
  std::optional<Matrix> var_hac;
  std::optional<Index> hac_bandwidth;

  const Matrix& variance() const { return var_hac ? *var_hac : var_iid; }
};
LinearGmmFit linear_gmm(const Matrix& regressors, const Vector& outcome, const Matrix& instruments,
                        const std::optional<HacConfig>& hac = std::nullopt);

}  // namespace ncbridge
