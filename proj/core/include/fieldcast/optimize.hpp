#pragma once

#include <functional>
#include <span>

#include <Eigen/Core>

namespace fieldcast {

// Smooth objective. Writes the gradient into `grad` when it is non-empty and
// returns the objective value.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct MinimizeOptions {
  int max_iterations = 2000;
  double gradient_tolerance = 1e-9;
  double function_tolerance = 1e-16;
  double parameter_tolerance = 1e-14;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double initial_value = 0.0;
  // Euclidean norm of the gradient at `x`.
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Unconstrained BFGS line-search minimization. The returned point never has
// a larger objective than `x0`.
MinimizeResult minimize_bfgs(const Objective& objective, const Eigen::VectorXd& x0,
                             const MinimizeOptions& options = {});

}  // namespace fieldcast
