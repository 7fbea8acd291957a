#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>

namespace ncbridge {

/// Risk differences of a binary exposure X and binary negative control
/// exposure Z. Expectations E(RD_{.|Z}) average over the marginal of Z.
struct RiskDifferenceSummary {
  double rd_xy_given_z = 0.0;   // E(RD_{XY|Z})
  double rd_zy_given_x0 = 0.0;  // RD_{ZY|X=0}
  double rd_zy_given_x1 = 0.0;
  double rd_zw_given_x0 = 0.0;
  double rd_zw_given_x1 = 0.0;
  double rd_xw_given_z = 0.0;   // E(RD_{XW|Z})
  double rd_xw_given_z0 = 0.0;  // RD_{XW|Z=0}
  double rd_xw_given_z1 = 0.0;
  std::array<double, 2> pr_z_x1{0.0, 0.0};  // pr(Z=z, X=1)
  std::optional<double> averaged_rd_zy_given_x;  // E(RD_{ZY|X})
  std::optional<double> averaged_rd_zw_given_x;

  /// Throws InvalidArgument on non-finite values or invalid probabilities.
  void validate() const;
  /// E(RD_{ZY|X}) and E(RD_{ZW|X}): the stored value, or the X=0 / X=1
  /// values weighted by pr(X=1) = pr(Z=0,X=1) + pr(Z=1,X=1).
  double mean_rd_zy() const;
  double mean_rd_zw() const;
};

struct AdjustmentResult {
  double ace = 0.0;
  double gamma2 = 0.0;
  double gamma3 = 0.0;
};

/// Interaction bridge b = g0 + g1 X + g2 W + g3 XW when `interaction`,
/// additive bridge (g3 = 0) otherwise. Zero Z-W risk differences throw
/// IdentificationError.
AdjustmentResult binary_nc_adjust(const RiskDifferenceSummary& s, bool interaction);

struct SensitivityResult {
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  double lo = 0.0;
  double hi = 0.0;

  double ace(double ace_xw) const { return gamma1 + gamma2 * ace_xw; }
};

/// ACE_XY = gamma1 + gamma2 ACE_XW over ACE_XW in [a, b]; bound endpoints sorted.
SensitivityResult positive_control_adjust(const RiskDifferenceSummary& s, double a, double b);

/// ACE_XW at which the adjusted ACE_XY is zero: -gamma1 / gamma2.
double explain_away_threshold(const RiskDifferenceSummary& s);

/// Flat `key = value` file using the field names above; `pr_z_x1 = p0, p1`
/// or `pr_z0_x1` / `pr_z1_x1`. '#' starts a comment.
RiskDifferenceSummary parse_summary(const std::string& text);
RiskDifferenceSummary read_summary_file(const std::filesystem::path& path);

}  // namespace ncbridge
