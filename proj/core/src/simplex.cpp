#include "deconfound/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace deconfound {

namespace {

struct Run {
  Eigen::VectorXd best;
  double value;
  std::size_t iterations;
  bool converged;
};

// Standard coefficients: reflection 1, expansion 2, contraction 1/2, shrink 1/2.
Run minimize(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& start,
             double step, double f_tol, std::size_t max_iter) {
  const auto n = start.size();
  std::vector<Eigen::VectorXd> vertex(static_cast<std::size_t>(n + 1), start);
  std::vector<double> value(static_cast<std::size_t>(n + 1));
  for (Eigen::Index i = 0; i < n; ++i) vertex[static_cast<std::size_t>(i + 1)][i] += step;
  for (std::size_t i = 0; i < vertex.size(); ++i) value[i] = f(vertex[i]);

  std::vector<std::size_t> order(vertex.size());
  std::size_t iter = 0;
  bool converged = false;
  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return value[a] < value[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second_worst = order[order.size() - 2];

    const double spread = value[worst] - value[best];
    if (std::isfinite(spread) && spread < f_tol) {
      converged = true;
      break;
    }
    if (iter >= max_iter) break;
    ++iter;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < vertex.size(); ++i) {
      if (i != worst) centroid += vertex[i];
    }
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd reflected = centroid + (centroid - vertex[worst]);
    const double f_reflected = f(reflected);
    if (f_reflected < value[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - vertex[worst]);
      const double f_expanded = f(expanded);
      if (f_expanded < f_reflected) {
        vertex[worst] = expanded;
        value[worst] = f_expanded;
      } else {
        vertex[worst] = reflected;
        value[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < value[second_worst]) {
      vertex[worst] = reflected;
      value[worst] = f_reflected;
      continue;
    }
    // Contraction: outside if the reflection improved on the worst vertex.
    const bool outside = f_reflected < value[worst];
    const Eigen::VectorXd contracted = outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                                               : Eigen::VectorXd(centroid + 0.5 * (vertex[worst] - centroid));
    const double f_contracted = f(contracted);
    if (f_contracted < (outside ? f_reflected : value[worst])) {
      vertex[worst] = contracted;
      value[worst] = f_contracted;
      continue;
    }
    for (std::size_t i = 0; i < vertex.size(); ++i) {
      if (i == best) continue;
      vertex[i] = vertex[best] + 0.5 * (vertex[i] - vertex[best]);
      value[i] = f(vertex[i]);
    }
  }
  const auto best_it = std::min_element(value.begin(), value.end());
  const auto best_index = static_cast<std::size_t>(best_it - value.begin());
  return {vertex[best_index], *best_it, iter, converged};
}

}  // namespace

SimplexResult nelder_mead(const Objective& objective, const Eigen::VectorXd& start,
                          const SimplexOptions& options) {
  SimplexResult result;
  std::size_t evaluations = 0;
  auto f = [&](const Eigen::VectorXd& p) {
    ++evaluations;
    const double v = objective(p);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  Run run = minimize(f, start, options.initial_step, options.f_tolerance, options.max_iterations);
  std::size_t iterations = run.iterations;
  if (run.converged && options.restart && iterations < options.max_iterations) {
    Run again = minimize(f, run.best, 0.1 * options.initial_step, options.f_tolerance,
                         options.max_iterations - iterations);
    iterations += again.iterations;
    const bool improved = again.value < run.value - options.f_tolerance;
    if (again.value <= run.value) {
      run.best = again.best;
      run.value = again.value;
    }
    run.converged = again.converged || !improved;
  }

  result.argmin = std::move(run.best);
  result.value = run.value;
  result.iterations = iterations;
  result.evaluations = evaluations;
  result.converged = run.converged;
  return result;
}

}  // namespace deconfound
