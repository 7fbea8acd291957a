#include "ncbridge/summary.hpp"

#include "ncbridge/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace ncbridge {

namespace {

constexpr double kZero = 1e-12;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(value)) {
    throw InvalidArgument("summary field '" + key + "' is not a finite number: '" + t + "'");
  }
  return value;
}

}  // namespace

void RiskDifferenceSummary::validate() const {
  for (double v : {rd_xy_given_z, rd_zy_given_x0, rd_zy_given_x1, rd_zw_given_x0, rd_zw_given_x1, rd_xw_given_z,
                   rd_xw_given_z0, rd_xw_given_z1}) {
    if (!std::isfinite(v)) throw InvalidArgument("risk differences must be finite");
  }
  for (double p : pr_z_x1) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("pr(Z=z, X=1) must lie in [0, 1]");
  }
  if (pr_z_x1[0] + pr_z_x1[1] > 1.0 + 1e-12) throw InvalidArgument("pr(Z=z, X=1) entries sum above 1");
  for (const auto& v : {averaged_rd_zy_given_x, averaged_rd_zw_given_x}) {
    if (v && !std::isfinite(*v)) throw InvalidArgument("averaged risk differences must be finite");
  }
}

double RiskDifferenceSummary::mean_rd_zy() const {
  if (averaged_rd_zy_given_x) return *averaged_rd_zy_given_x;
  const double p1 = pr_z_x1[0] + pr_z_x1[1];
  return (1.0 - p1) * rd_zy_given_x0 + p1 * rd_zy_given_x1;
}

double RiskDifferenceSummary::mean_rd_zw() const {
  if (averaged_rd_zw_given_x) return *averaged_rd_zw_given_x;
  const double p1 = pr_z_x1[0] + pr_z_x1[1];
  return (1.0 - p1) * rd_zw_given_x0 + p1 * rd_zw_given_x1;
}

AdjustmentResult binary_nc_adjust(const RiskDifferenceSummary& s, bool interaction) {
  s.validate();
  AdjustmentResult r;
  if (interaction) {
    if (std::abs(s.rd_zw_given_x0) <= kZero || std::abs(s.rd_zw_given_x1) <= kZero) {
      throw IdentificationError("no Z-W association within an exposure level: RD_{ZW|X=x} is zero");
    }
    r.gamma2 = s.rd_zy_given_x0 / s.rd_zw_given_x0;
    r.gamma3 = s.rd_zy_given_x1 / s.rd_zw_given_x1 - r.gamma2;
    const double shift = s.rd_xw_given_z0 * s.pr_z_x1[0] + s.rd_xw_given_z1 * s.pr_z_x1[1];
    r.ace = s.rd_xy_given_z - (r.gamma2 + r.gamma3) * s.rd_xw_given_z + r.gamma3 * shift;
  } else {
    const double denom = s.mean_rd_zw();
    if (std::abs(denom) <= kZero) throw IdentificationError("no Z-W association: E(RD_{ZW|X}) is zero");
    r.gamma2 = s.mean_rd_zy() / denom;
    r.ace = s.rd_xy_given_z - r.gamma2 * s.rd_xw_given_z;
  }
  return r;
}

SensitivityResult positive_control_adjust(const RiskDifferenceSummary& s, double a, double b) {
  if (!std::isfinite(a) || !std::isfinite(b)) throw InvalidArgument("ACE_XW range must be finite");
  if (a > b) throw InvalidArgument("ACE_XW range needs a <= b");
  s.validate();
  const double denom = s.mean_rd_zw();
  if (std::abs(denom) <= kZero) throw IdentificationError("no Z-W association: E(RD_{ZW|X}) is zero");
  SensitivityResult r;
  r.gamma2 = s.mean_rd_zy() / denom;
  r.gamma1 = s.rd_xy_given_z - r.gamma2 * s.rd_xw_given_z;
  r.lo = std::min(r.ace(a), r.ace(b));
  r.hi = std::max(r.ace(a), r.ace(b));
  return r;
}

double explain_away_threshold(const RiskDifferenceSummary& s) {
  const SensitivityResult r = positive_control_adjust(s, 0.0, 0.0);
  if (r.gamma2 == 0.0) throw IdentificationError("gamma2 is zero: the adjusted effect does not depend on ACE_XW");
  return -r.gamma1 / r.gamma2;
}

RiskDifferenceSummary parse_summary(const std::string& text) {
  RiskDifferenceSummary s;
  const std::map<std::string, double*> fields{
      {"rd_xy_given_z", &s.rd_xy_given_z},   {"rd_zy_given_x0", &s.rd_zy_given_x0},
      {"rd_zy_given_x1", &s.rd_zy_given_x1}, {"rd_zw_given_x0", &s.rd_zw_given_x0},
      {"rd_zw_given_x1", &s.rd_zw_given_x1}, {"rd_xw_given_z", &s.rd_xw_given_z},
      {"rd_xw_given_z0", &s.rd_xw_given_z0}, {"rd_xw_given_z1", &s.rd_xw_given_z1},
      {"pr_z0_x1", &s.pr_z_x1[0]},           {"pr_z1_x1", &s.pr_z_x1[1]},
  };
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("summary line " + std::to_string(number) + " is not key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = line.substr(eq + 1);
    if (auto it = fields.find(key); it != fields.end()) {
      *it->second = parse_number(key, value);
    } else if (key == "averaged_rd_zy_given_x") {
      s.averaged_rd_zy_given_x = parse_number(key, value);
    } else if (key == "averaged_rd_zw_given_x") {
      s.averaged_rd_zw_given_x = parse_number(key, value);
    } else if (key == "pr_z_x1") {
      const auto comma = value.find(',');
      if (comma == std::string::npos) throw InvalidArgument("pr_z_x1 needs two comma-separated values");
      s.pr_z_x1[0] = parse_number(key, value.substr(0, comma));
      s.pr_z_x1[1] = parse_number(key, value.substr(comma + 1));
    } else {
      throw InvalidArgument("unknown summary field '" + key + "'");
    }
  }
  s.validate();
  return s;
}

RiskDifferenceSummary read_summary_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open summary file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_summary(buf.str());
}

}  // namespace ncbridge
