#pragma once

// Shared domain types: scenarios, datasets, covariate bases, evaluation
// grids and support regions.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace deconfound {

enum class Shape { Linear, Quadratic };

std::string_view to_string(Shape shape);
Shape parse_shape(std::string_view name);

/// Closed interval [lo, hi].
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const noexcept { return lo <= x && x <= hi; }
  double width() const noexcept { return hi - lo; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// One monomial term coef * x^x_pow * t^[t] * u^[u] of an outcome mean.
/// Treatment and confounder are binary, so they enter at most linearly.
struct OutcomeTerm {
  double coef = 0.0;
  int x_pow = 0;
  bool t = false;
  bool u = false;
  friend bool operator==(const OutcomeTerm&, const OutcomeTerm&) = default;
};

/// Assignment probabilities of T_k in the observational cohort.
struct TreatProbs {
  double given_u1 = 0.5;  // P(T_k = 1 | U = 1)
  double given_u0 = 0.5;  // P(T_k = 1 | U = 0)
  friend bool operator==(const TreatProbs&, const TreatProbs&) = default;
};

/// Full generative description of one simulation scenario with K treatments.
struct ScenarioSpec {
  Shape shape = Shape::Linear;
  std::size_t k_trials = 2;
  std::size_t obs_size = 50'000;
  std::vector<std::size_t> rct_sizes;  // n_1..n_K
  Interval obs_x_range{-3.0, 3.0};
  std::vector<Interval> rct_x_ranges;
  double u_prob = 0.5;  // P(U = 1) in the shared population
  std::vector<TreatProbs> treat_probs;
  double rct_propensity = 0.5;  // P(T_k = 1) inside trial k
  std::vector<std::vector<OutcomeTerm>> outcome_coefs;  // E[Y | k] per trial
  double noise_sd = 1.0;

  /// Default two-treatment scenario with n1 = 1000, n2 = 5000.
  static ScenarioSpec defaults(Shape shape);

  /// Throws ValidationError describing the first violated invariant.
  void validate() const;

  std::string to_json() const;
  static ScenarioSpec from_json(std::string_view text);

  friend bool operator==(const ScenarioSpec&, const ScenarioSpec&) = default;
};

/// Monomial feature map: degrees [0, 1, 2] expand x to (1, x, x^2).
class Basis {
 public:
  explicit Basis(std::vector<int> degrees);

  static Basis polynomial(int max_degree);
  /// Sorted union of two bases.
  static Basis merge(const Basis& a, const Basis& b);
  /// Parses "0,1,2".
  static Basis parse(std::string_view list);

  std::size_t dim() const noexcept { return degrees_.size(); }
  const std::vector<int>& degrees() const noexcept { return degrees_; }

  /// Throws std::domain_error for non-finite x.
  Eigen::VectorXd expand(double x) const;
  void expand_into(double x, Eigen::Ref<Eigen::VectorXd> out) const;
  /// One row per x.
  Eigen::MatrixXd design(std::span<const double> xs) const;

  std::string to_string() const;
  friend bool operator==(const Basis&, const Basis&) = default;

 private:
  std::vector<int> degrees_;
};

inline Eigen::VectorXd expand(double x, const Basis& basis) { return basis.expand(x); }

/// Ordered abscissae lo, lo + step, ..., <= hi.
class EvalGrid {
 public:
  EvalGrid(double lo, double hi, double step);
  static EvalGrid defaults() { return EvalGrid(-3.0, 3.0, 0.05); }
  /// Parses "lo:hi:step".
  static EvalGrid parse(std::string_view text);

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  double step() const noexcept { return step_; }
  const std::vector<double>& points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }

 private:
  double lo_;
  double hi_;
  double step_;
  std::vector<double> points_;
};

enum class Region { InsideRct1, InsideRct2Only, OutsideBoth };

std::string_view to_string(Region region);
Region parse_region(std::string_view name);
inline constexpr Region kAllRegions[] = {Region::InsideRct1, Region::InsideRct2Only,
                                         Region::OutsideBoth};

struct SupportRegion {
  Interval rct1{1.5, 2.0};
  Interval rct2{0.0, 2.5};
  Interval target{-3.0, 3.0};

  static SupportRegion from_scenario(const ScenarioSpec& spec);
  void validate() const;
  friend bool operator==(const SupportRegion&, const SupportRegion&) = default;
};

/// Closed intervals; the innermost interval containing x wins.
/// Throws std::out_of_range when x lies outside the target interval.
Region region_of(double x, const SupportRegion& support);

/// Columns (x, t, y) of one treatment; the only view estimators consume.
struct TreatmentSlice {
  std::span<const double> x;
  std::span<const std::uint8_t> t;
  std::span<const double> y;
};

/// Confounded observational cohort. The hidden confounder is stored for
/// oracle checks only; estimation code reads a TreatmentSlice, which has
/// no access to it.
class ObservationalDataset {
 public:
  ObservationalDataset(std::vector<double> x, std::vector<std::vector<std::uint8_t>> t,
                       std::vector<std::vector<double>> y,
                       std::optional<std::vector<std::uint8_t>> oracle_u);

  std::size_t size() const noexcept { return x_.size(); }
  std::size_t k_trials() const noexcept { return t_.size(); }
  std::span<const double> x() const noexcept { return x_; }
  std::span<const std::uint8_t> t(std::size_t k) const;
  std::span<const double> y(std::size_t k) const;

  bool has_oracle_u() const noexcept { return u_.has_value(); }
  /// Oracle-only access to the hidden confounder.
  std::span<const std::uint8_t> oracle_u() const;

  /// Columns (x, t_k, y_k) for 1-based treatment index k.
  TreatmentSlice slice(std::size_t k) const;

 private:
  std::vector<double> x_;
  std::vector<std::vector<std::uint8_t>> t_;
  std::vector<std::vector<double>> y_;
  std::optional<std::vector<std::uint8_t>> u_;
};

/// Data from randomized trial k. There is deliberately no confounder column.
struct RctDataset {
  std::size_t trial_id = 1;
  std::vector<double> x;
  std::vector<std::uint8_t> t;
  std::vector<double> y;

  std::size_t size() const noexcept { return x.size(); }
  TreatmentSlice slice() const { return {x, t, y}; }
};

}  // namespace deconfound
