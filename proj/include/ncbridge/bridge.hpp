#pragma once

#include "ncbridge/data.hpp"

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ncbridge {

/// A single variable inside a feature term: x, w, z or covariate column v[j].
struct Factor {
  enum class Var { x, w, z, v };
  Var var = Var::x;
  Index index = 0;  // only meaningful for Var::v

  friend bool operator==(const Factor&, const Factor&) = default;
};

/// Product of factors; an empty product is the intercept.
struct Term {
  std::vector<Factor> factors;

  std::string label() const;
  double evaluate(const Observation& obs, double x) const;
  bool uses(Factor::Var var) const;

  friend bool operator==(const Term&, const Term&) = default;
};

/// Ordered list of terms mapping an observation to a feature vector.
///
/// Text form: comma separated terms such as `1, x, v[0], w, x*v[0], x*w`.
/// `v[*]` expands to every covariate column, and inside a product it expands
/// the product once per column (`x*v[*]`). Expansion of `v[*]` needs the
/// covariate count, so `parse` takes it.
class FeatureMap {
 public:
  FeatureMap() = default;
  explicit FeatureMap(std::vector<Term> terms);

  static FeatureMap parse(std::string_view text, Index covariates);

  Index dim() const { return static_cast<Index>(terms_.size()); }
  const std::vector<Term>& terms() const { return terms_; }
  std::vector<std::string> labels() const;
  std::string to_string() const;

  /// Evaluates every term with the exposure replaced by `x`.
  void evaluate(const Observation& obs, double x, double* out) const;
  bool uses(Factor::Var var) const;
  /// One past the largest covariate index referenced (0 when none).
  Index covariates_needed() const;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::vector<Term> terms_;
};

enum class BridgeKind { linear, multiplicative, custom };

/// User supplied bridge b(W, V, x; gamma).
using BridgeFunction = std::function<double(const Observation&, double x, std::span<const double> gamma)>;

/// Parametric confounding bridge b(W, V, X; gamma).
///   linear:          b = phi . gamma
///   multiplicative:  b = exp(phi . gamma)
///   custom:          b = user function (no analytic derivatives)
class BridgeModel {
 public:
  BridgeModel(BridgeKind kind, FeatureMap features);
  BridgeModel(BridgeFunction fn, Index dim, std::vector<std::string> labels = {});

  BridgeKind kind() const { return kind_; }
  Index dim() const { return dim_; }
  const FeatureMap& features() const { return features_; }
  std::vector<std::string> labels() const;

  double evaluate(const Observation& obs, double x, std::span<const double> gamma) const;
  bool linear_in_parameters() const { return kind_ == BridgeKind::linear; }

 private:
  BridgeKind kind_;
  FeatureMap features_;
  BridgeFunction fn_;
  Index dim_ = 0;
  std::vector<std::string> custom_labels_;
};

/// Instrument function q(X, V, Z).
class InstrumentMap {
 public:
  explicit InstrumentMap(FeatureMap features);

  Index dim() const { return features_.dim(); }
  const FeatureMap& features() const { return features_; }

 private:
  FeatureMap features_;
};

/// Exposure levels (x1, x0) defining the contrast Delta = E{Y(x1) - Y(x0)}.
struct Contrast {
  double x1 = 1.0;
  double x0 = 0.0;
};

/// Bridge + instruments + optional contrast. theta = (gamma, Delta) when a
/// contrast is present, gamma otherwise. Requires dim(q) >= dim(gamma).
class MomentSpec {
 public:
  MomentSpec(BridgeModel bridge, InstrumentMap instruments, std::optional<Contrast> contrast = std::nullopt);

  const BridgeModel& bridge() const { return bridge_; }
  const InstrumentMap& instruments() const { return instruments_; }
  const std::optional<Contrast>& contrast() const { return contrast_; }

  Index gamma_dim() const { return bridge_.dim(); }
  Index theta_dim() const { return bridge_.dim() + (contrast_ ? 1 : 0); }
  Index moment_dim() const { return instruments_.dim() + (contrast_ ? 1 : 0); }
  bool just_identified() const { return instruments_.dim() == bridge_.dim(); }

  /// Parameter names: bridge term labels followed by "ace" when a contrast is present.
  std::vector<std::string> parameter_labels() const;

  /// Text config (see parse_moment_spec). Custom bridges cannot be serialized.
  std::string to_config() const;

 private:
  BridgeModel bridge_;
  InstrumentMap instruments_;
  std::optional<Contrast> contrast_;
};

/// Rows h(D_i; theta): residual times instruments, followed by the contrast
/// entry Delta - {b(W,V,x1) - b(W,V,x0)} when a contrast is present.
Matrix moment_function(const MomentSpec& spec, const NCDataset& data, const Vector& theta);

/// Column means of moment_function.
Vector mean_moments(const MomentSpec& spec, const NCDataset& data, const Vector& theta);

/// Feature matrices of a linear bridge: Phi (bridge features at observed x),
/// Q (instruments) and Dphi = phi(x1) - phi(x0) when a contrast is present.
struct DesignMatrices {
  Matrix phi;
  Matrix q;
  Matrix contrast_phi;
};
DesignMatrices design_matrices(const MomentSpec& spec, const NCDataset& data);

enum class BuiltinBridge { binary_interaction, linear_additive, timeseries_lag, structural };

BuiltinBridge parse_builtin_bridge(std::string_view name);
std::string_view to_string(BuiltinBridge b);

struct BridgePair {
  BridgeModel bridge;
  InstrumentMap instruments;
};

/// Bridge/instrument pairs of the standard designs. `covariates` is the number
/// of V columns that `v[*]` expands to (default 0 for structural, 1 otherwise).
///   binary_interaction: b = (1, x, v, w, x*v, x*w),  q = (1, x, v, z, x*v, x*z)
///   linear_additive:    b = (1, x, v, w),            q = (1, x, v, z)
///   timeseries_lag:     as linear_additive over the lagged design columns
///   structural:         b = (1, x, v, w),            q = (1, x, v, z)
BridgePair builtin_bridges(BuiltinBridge which, std::optional<Index> covariates = std::nullopt);
BridgePair builtin_bridges(std::string_view name, std::optional<Index> covariates = std::nullopt);

/// Parses a key = value config:
///
///     kind = linear                  # or multiplicative
///     bridge = 1, x, v[*], w
///     instruments = 1, x, v[*], z
///     contrast = 1, 0                # optional
///
/// or `builtin = <name>` in place of kind/bridge/instruments. Lines starting
/// with '#' are comments.
MomentSpec parse_moment_spec(std::string_view config, Index covariates);
MomentSpec load_moment_spec(const std::filesystem::path& path, Index covariates);

}  // namespace ncbridge
