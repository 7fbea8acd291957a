#include "ncbridge/optimize.hpp"

#include <cmath>

namespace ncbridge {

MinimizeResult bfgs_minimize(const std::function<double(const Vector&)>& objective,
                             const std::function<Vector(const Vector&)>& gradient, Vector start,
                             const BfgsOptions& options) {
  const Index d = start.size();
  MinimizeResult r;
  r.x = std::move(start);
  r.value = objective(r.x);
  r.gradient = gradient(r.x);
  Matrix h_inv = Matrix::Identity(d, d);

  for (int it = 0; it < options.max_iterations; ++it) {
    r.iterations = it;
    if (!std::isfinite(r.value) || !r.gradient.allFinite()) return r;
    if (r.gradient.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      r.converged = true;
      return r;
    }

    Vector direction = -h_inv * r.gradient;
    double slope = r.gradient.dot(direction);
    if (slope >= 0.0) {
      // Lost descent; restart from steepest descent.
      h_inv.setIdentity();
      direction = -r.gradient;
      slope = -r.gradient.squaredNorm();
    }

    double step = 1.0;
    Vector candidate;
    double value = 0.0;
    bool accepted = false;
    for (int k = 0; k < options.max_halvings; ++k) {
      candidate = r.x + step * direction;
      value = objective(candidate);
      if (std::isfinite(value) && value <= r.value + options.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) return r;

    Vector grad_new = gradient(candidate);
    const Vector s = candidate - r.x;
    const Vector y = grad_new - r.gradient;
    const double sy = s.dot(y);
    r.x = std::move(candidate);
    r.value = value;
    r.gradient = std::move(grad_new);

    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (it == 0) h_inv *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      const Vector hy = h_inv * y;
      // H <- (I - rho s y') H (I - rho y s') + rho s s'
      h_inv += rho * ((1.0 + rho * y.dot(hy)) * (s * s.transpose()) - hy * s.transpose() - s * hy.transpose());
    }
  }
  r.iterations = options.max_iterations;
  r.converged = r.gradient.allFinite() && r.gradient.lpNorm<Eigen::Infinity>() < options.gradient_tolerance;
  return r;
}

}  // namespace ncbridge
