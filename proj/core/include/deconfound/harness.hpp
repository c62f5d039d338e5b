#pragma once

// Monte Carlo runner for the RCT1-only vs. RCT1+RCT2 comparison: scenario x
// n1 x method cells, seeded replications, pointwise bands and regional
// error metrics against the oracle CATE of treatment 1.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deconfound/core_model.hpp"
#include "deconfound/deconfound.hpp"
#include "deconfound/oracle.hpp"

namespace deconfound {

inline constexpr std::string_view kFormatVersion = "deconfound-lab v1";

enum class Method { Rct1Only, Hierarchical };
std::string_view to_string(Method method);
Method parse_method(std::string_view name);

struct EstimatorBases {
  Basis single;  // eta basis of the RCT1-only fit
  Basis f;       // fixed part of the hierarchical fit
  Basis g;       // random part of the hierarchical fit
};

/// Bases matching the degree of the scenario's deconfounding functions.
EstimatorBases default_bases(Shape shape);

struct EstimatorConfig {
  Basis omega_basis = Basis::polynomial(2);
  std::optional<Basis> single_basis;
  std::optional<Basis> f_basis;
  std::optional<Basis> g_basis;
  SignalOptions signal{};
  RemlOptions reml{};

  EstimatorBases bases_for(Shape shape) const;
};

struct ExperimentPlan {
  std::vector<ScenarioSpec> scenarios;
  std::vector<std::size_t> n1_values{100, 1000, 2000};
  std::vector<Method> methods{Method::Rct1Only, Method::Hierarchical};
  std::size_t replications = 200;
  EvalGrid grid = EvalGrid::defaults();
  std::uint64_t master_seed = 20240101;
  EstimatorConfig estimator{};

  /// Both default scenarios, n1 in {100, 1000, 2000}, both methods, R = 200.
  static ExperimentPlan defaults();
  /// Throws ValidationError.
  void validate() const;
};

struct ReplicationResult {
  std::string scenario;
  std::size_t n1 = 0;
  Method method = Method::Rct1Only;
  std::size_t rep = 0;
  std::vector<double> x;
  std::vector<double> tau_hat;  // NaN everywhere when failed
  std::vector<double> eta_hat;
  bool failed = false;
  std::string failure;
  bool converged = true;
  std::size_t rank = 0;
};

/// Everything a summary needs from one scenario.
struct ScenarioTruth {
  Polynomial tau1;
  SupportRegion support;
};

struct ResultSet {
  std::map<std::string, ScenarioTruth> truth;
  std::vector<ReplicationResult> results;  // ordered by (scenario, n1, method, rep)
};

/// Runs every cell of the plan. The output is a pure function of the plan;
/// `workers` only changes wall-clock time.
ResultSet run_plan(const ExperimentPlan& plan, std::size_t workers = 1);

struct PointSummary {
  std::string scenario;
  std::size_t n1 = 0;
  Method method = Method::Rct1Only;
  double x = 0.0;
  double mean = 0.0;
  double p025 = 0.0;
  double p975 = 0.0;
};

struct RegionSummary {
  std::string scenario;
  std::size_t n1 = 0;
  Method method = Method::Rct1Only;
  Region region = Region::OutsideBoth;
  double bias = 0.0;         // grid-average error of the mean curve
  double rmse = 0.0;         // pooled over replications and grid points
  std::size_t failures = 0;
  double median_rmse = 0.0;  // median over replications of per-replication RMSE
  bool missing = false;      // every replication failed
};

struct SummaryTable {
  std::vector<PointSummary> points;
  std::vector<RegionSummary> regions;

  const RegionSummary& region(std::string_view scenario, std::size_t n1, Method method,
                              Region region) const;
  std::vector<PointSummary> curve(std::string_view scenario, std::size_t n1, Method method) const;
};

/// Type-7 (linear interpolation) quantile of unsorted values, q in [0, 1].
double quantile(std::vector<double> values, double q);

/// Failed replications are excluded and counted. A cell whose replications
/// all failed yields NaN statistics and is flagged missing.
SummaryTable summarize(const ResultSet& results);

/// max |mean(x) - tau(x)| over summary points of one cell with x in `within`.
double mean_curve_max_error(const SummaryTable& table, std::string_view scenario, std::size_t n1,
                            Method method, const Polynomial& tau, const Interval& within);

void write_results_csv(std::ostream& out, const ResultSet& results);
ResultSet read_results_csv(std::istream& in);
void write_summary_csv(std::ostream& out, const SummaryTable& table,
                       const std::map<std::string, ScenarioTruth>& truth);

}  // namespace deconfound
