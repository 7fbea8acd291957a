#pragma once

#include <span>

namespace ncbridge {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double value) const { return lo <= value && value <= hi; }
  double half_width() const { return 0.5 * (hi - lo); }
};

/// Standard normal quantile and upper-tail complement.
double normal_quantile(double p);
double normal_cdf(double z);

/// estimate -/+ z_{(1+level)/2} * sqrt(variance).
Interval confidence_interval(double estimate, double variance, double level = 0.95);

/// Fraction of intervals containing `truth`; 0 intervals is an error.
double coverage_probability(std::span<const Interval> intervals, double truth);

/// Two-sided normal p-value 2 * {1 - Phi(|estimate| / sqrt(variance))}.
double p_value(double estimate, double variance);

}  // namespace ncbridge
