#include "ncbridge/inference.hpp"

#include "ncbridge/errors.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>

namespace ncbridge {

namespace {
const boost::math::normal_distribution<double> kStandardNormal;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("normal_quantile: probability must lie in (0, 1)");
  return boost::math::quantile(kStandardNormal, p);
}

double normal_cdf(double z) { return boost::math::cdf(kStandardNormal, z); }

Interval confidence_interval(double estimate, double variance, double level) {
  if (!(variance >= 0.0)) throw InvalidArgument("confidence_interval: negative or NaN variance");
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("confidence_interval: level must lie in (0, 1)");
  const double half = normal_quantile(0.5 + 0.5 * level) * std::sqrt(variance);
  return {estimate - half, estimate + half};
}

double coverage_probability(std::span<const Interval> intervals, double truth) {
  if (intervals.empty()) throw InvalidArgument("coverage_probability: no intervals");
  std::size_t hits = 0;
  for (const auto& ci : intervals) hits += ci.contains(truth) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(intervals.size());
}

double p_value(double estimate, double variance) {
  if (!(variance >= 0.0)) throw InvalidArgument("p_value: negative or NaN variance");
  if (variance == 0.0) return estimate == 0.0 ? 1.0 : 0.0;
  const double z = std::abs(estimate) / std::sqrt(variance);
  return 2.0 * boost::math::cdf(boost::math::complement(kStandardNormal, z));
}

}  // namespace ncbridge
