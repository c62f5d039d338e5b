#pragma once

// Closed-form ground truth for tau_k, omega_k and eta_k of a scenario, and a
// large-sample Monte Carlo cross-check.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "deconfound/core_model.hpp"

namespace deconfound {

/// Polynomial in x; coefs[i] multiplies x^i.
struct Polynomial {
  std::vector<double> coefs;

  double operator()(double x) const;
  std::size_t degree() const;
  /// Drops exact-zero leading coefficients.
  Polynomial trimmed() const;
  friend Polynomial operator+(const Polynomial& a, const Polynomial& b);
  friend Polynomial operator-(const Polynomial& a, const Polynomial& b);
  /// Largest coefficient-wise absolute difference.
  friend double max_abs_diff(const Polynomial& a, const Polynomial& b);
};

/// P(U = 1 | T_k = t) in the observational cohort, by Bayes' rule.
double posterior_u(std::size_t k, int t, const ScenarioSpec& spec);

/// CATE with U marginalized over its population law.
Polynomial true_tau_poly(std::size_t k, const ScenarioSpec& spec);
/// Population limit of the naive arm difference in confounded data.
Polynomial true_omega_poly(std::size_t k, const ScenarioSpec& spec);
/// Deconfounding function, built from the confounder terms of E[Y | k]
/// alone (not as tau - omega).
Polynomial true_eta_poly(std::size_t k, const ScenarioSpec& spec);

double true_tau(std::size_t k, double x, const ScenarioSpec& spec);
double true_omega(std::size_t k, double x, const ScenarioSpec& spec);
double true_eta(std::size_t k, double x, const ScenarioSpec& spec);

struct OracleCurves {
  Shape shape = Shape::Linear;
  std::vector<Polynomial> tau;
  std::vector<Polynomial> omega;
  std::vector<Polynomial> eta;
  std::vector<double> posterior_treated;  // P(U=1 | T_k=1)
  std::vector<double> posterior_control;  // P(U=1 | T_k=0)
};

OracleCurves oracle_curves(const ScenarioSpec& spec);
std::string to_json(const OracleCurves& curves);

struct BruteForceOptions {
  double lo = -2.5;
  double hi = 2.5;
  double step = 0.1;
  /// Bins are centred on grid points.
  double bin_width = 0.1;
  /// Fixed shard count keeps results independent of the worker count.
  std::size_t shards = 16;
  std::size_t workers = 1;
};

struct BruteForceTrial {
  std::vector<double> omega_hat;
  std::vector<double> tau_hat;
  double max_omega_dev = 0.0;
  double max_tau_dev = 0.0;
};

struct BruteForceReport {
  std::size_t n = 0;
  std::vector<double> grid;
  std::vector<BruteForceTrial> trials;
};

/// Simulates n observational units (n >= 1e5). omega-hat_k is the binned
/// treated-minus-control difference, post-stratified on the simulated
/// confounder with empirical P(U | T_k); tau-hat_k bins the difference of
/// both potential outcomes of every unit (shared noise draw), weighted by
/// the empirical P(U). Deviations are max |estimate - closed form| over the grid.
BruteForceReport brute_force_check(const ScenarioSpec& spec, std::size_t n, std::uint64_t seed,
                                   const BruteForceOptions& options = {});
std::string to_json(const BruteForceReport& report);

}  // namespace deconfound
