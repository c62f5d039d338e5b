#pragma once

// Derivative-free Nelder-Mead minimizer for small parameter vectors.

#include <cstddef>
#include <functional>

#include <Eigen/Dense>

namespace deconfound {

struct SimplexOptions {
  double initial_step = 1.0;
  /// Converged when max - min of the simplex function values drops below this.
  double f_tolerance = 1e-8;
  std::size_t max_iterations = 500;
  /// Restart from the best vertex once after convergence, to guard against
  /// a collapsed simplex.
  bool restart = true;
};

struct SimplexResult {
  Eigen::VectorXd argmin;
  double value = 0.0;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Non-finite objective values are treated as +infinity.
SimplexResult nelder_mead(const Objective& objective, const Eigen::VectorXd& start,
                          const SimplexOptions& options = {});

}  // namespace deconfound
