#pragma once

#include "ncbridge/data.hpp"

#include <functional>

namespace ncbridge {

struct BfgsOptions {
  double gradient_tolerance = 1e-8;  // on the infinity norm
  int max_iterations = 200;
  double armijo = 1e-4;
  int max_halvings = 60;
};

struct MinimizeResult {
  Vector x;
  double value = 0.0;
  Vector gradient;
  int iterations = 0;
  bool converged = false;
};

/// Quasi-Newton minimization: BFGS update of the inverse Hessian with a
/// backtracking (halving) Armijo line search. Never throws on
/// non-convergence; check `converged`.
MinimizeResult bfgs_minimize(const std::function<double(const Vector&)>& objective,
                             const std::function<Vector(const Vector&)>& gradient, Vector start,
                             const BfgsOptions& options = {});

}  // namespace ncbridge
