#include "fieldcast/optimize.hpp"

#include <cmath>
#include <vector>

#include <ceres/ceres.h>

namespace fieldcast {
namespace {

class ObjectiveAdapter final : public ceres::FirstOrderFunction {
 public:
  ObjectiveAdapter(const Objective& objective, int n) : objective_(objective), n_(n) {}

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    std::span<const double> x(parameters, static_cast<std::size_t>(n_));
    std::span<double> g;
    if (gradient != nullptr) g = std::span<double>(gradient, static_cast<std::size_t>(n_));
    *cost = objective_(x, g);
    if (!std::isfinite(*cost)) return false;
    for (double v : g) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  int NumParameters() const override { return n_; }

 private:
  const Objective& objective_;
  int n_;
};

}  // namespace

MinimizeResult minimize_bfgs(const Objective& objective, const Eigen::VectorXd& x0,
                             const MinimizeOptions& options) {
  const int n = static_cast<int>(x0.size());
  MinimizeResult result;
  std::vector<double> grad(static_cast<std::size_t>(n));
  result.initial_value = objective(std::span<const double>(x0.data(), x0.size()), grad);

  Eigen::VectorXd x = x0;
  ceres::GradientProblem problem(new ObjectiveAdapter(objective, n));
  ceres::GradientProblemSolver::Options opts;
  opts.line_search_direction_type = ceres::BFGS;
  opts.logging_type = ceres::SILENT;
  opts.minimizer_progress_to_stdout = false;
  opts.max_num_iterations = options.max_iterations;
  opts.gradient_tolerance = options.gradient_tolerance;
  opts.function_tolerance = options.function_tolerance;
  opts.parameter_tolerance = options.parameter_tolerance;
  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(opts, problem, x.data(), &summary);

  double value = objective(std::span<const double>(x.data(), x.size()), grad);
  if (!std::isfinite(value) || value > result.initial_value) {
    x = x0;
    value = objective(std::span<const double>(x.data(), x.size()), grad);
  }
  result.x = x;
  result.value = value;
  result.gradient_norm = Eigen::Map<const Eigen::VectorXd>(grad.data(), n).norm();
  result.iterations = static_cast<int>(summary.iterations.size());
  result.converged = summary.termination_type == ceres::CONVERGENCE;
  return result;
}

}  // namespace fieldcast
