#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "deconfound/errors.hpp"
#include "deconfound/harness.hpp"

namespace deconfound {
namespace {

ExperimentPlan small_plan() {
  auto plan = ExperimentPlan::defaults();
  plan.n1_values = {100, 1000};
  plan.replications = 3;
  plan.grid = EvalGrid(-3.0, 3.0, 0.5);
  plan.master_seed = 99;
  return plan;
}

std::string results_text(const ResultSet& r) {
  std::ostringstream out;
  write_results_csv(out, r);
  return out.str();
}

std::string summary_text(const ResultSet& r) {
  std::ostringstream out;
  write_summary_csv(out, summarize(r), r.truth);
  return out.str();
}

ReplicationResult curve(const std::string& scenario, std::size_t rep, std::vector<double> x,
                        std::vector<double> tau) {
  ReplicationResult r;
  r.scenario = scenario;
  r.n1 = 100;
  r.rep = rep;
  r.x = std::move(x);
  r.tau_hat = std::move(tau);
  r.eta_hat.assign(r.x.size(), 0.0);
  return r;
}

TEST(Quantile, TypeSevenInterpolation) {
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile({0, 10}, 0.025), 0.25);
  EXPECT_DOUBLE_EQ(quantile({7}, 0.975), 7.0);
}

TEST(Plan, DefaultsAndValidation) {
  const auto plan = ExperimentPlan::defaults();
  EXPECT_EQ(plan.scenarios.size(), 2u);
  EXPECT_EQ(plan.n1_values, (std::vector<std::size_t>{100, 1000, 2000}));
  EXPECT_EQ(plan.replications, 200u);
  EXPECT_NO_THROW(plan.validate());

  auto bad = plan;
  bad.replications = 0;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = plan;
  bad.methods.clear();
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = plan;
  bad.n1_values.clear();
  EXPECT_THROW(bad.validate(), ValidationError);
  EXPECT_THROW(run_plan(bad), ValidationError);
}

TEST(Plan, DefaultBasesFollowScenarioDegree) {
  const auto lin = default_bases(Shape::Linear);
  const auto quad = default_bases(Shape::Quadratic);
  EXPECT_EQ(lin.single, Basis::polynomial(1));
  EXPECT_EQ(quad.f, Basis::polynomial(2));
  EXPECT_EQ(quad.g, Basis::polynomial(1));
  EstimatorConfig cfg;
  cfg.f_basis = Basis::polynomial(3);
  EXPECT_EQ(cfg.bases_for(Shape::Linear).single, Basis::merge(Basis::polynomial(3), lin.g));
}

TEST(RunPlan, CellCountsAndCurveLengths) {
  const auto plan = small_plan();
  const auto r = run_plan(plan, 2);
  ASSERT_EQ(r.results.size(), 2u * 2u * 2u * 3u);
  EXPECT_EQ(r.truth.size(), 2u);
  for (const auto& rep : r.results) {
    EXPECT_EQ(rep.x.size(), plan.grid.size());
    EXPECT_EQ(rep.tau_hat.size(), plan.grid.size());
    EXPECT_EQ(rep.eta_hat.size(), plan.grid.size());
    if (!rep.failed) {
      for (double v : rep.tau_hat) EXPECT_TRUE(std::isfinite(v));
    }
  }
  EXPECT_EQ(r.results.front().scenario, "linear");
  EXPECT_EQ(r.results.front().rep, 0u);
  EXPECT_EQ(r.results.back().scenario, "quadratic");
  EXPECT_EQ(r.results.back().method, Method::Hierarchical);
}

TEST(RunPlan, OutputIndependentOfWorkerCount) {
  const auto plan = small_plan();
  const auto serial = results_text(run_plan(plan, 1));
  EXPECT_EQ(serial, results_text(run_plan(plan, 3)));
  EXPECT_EQ(serial, results_text(run_plan(plan, 8)));
}

TEST(RunPlan, MethodFilterKeepsRct1OnlyCurvesUnchanged) {
  const auto both = run_plan(small_plan(), 2);
  auto plan = small_plan();
  plan.methods = {Method::Rct1Only};
  const auto only = run_plan(plan, 2);
  ASSERT_EQ(only.results.size(), both.results.size() / 2);
  std::size_t j = 0;
  for (const auto& rep : both.results) {
    if (rep.method != Method::Rct1Only) continue;
    EXPECT_EQ(rep.tau_hat, only.results[j].tau_hat);
    ++j;
  }
}

TEST(RunPlan, TinyTrialsFailWithoutAborting) {
  auto plan = small_plan();
  plan.scenarios = {ScenarioSpec::defaults(Shape::Quadratic)};
  plan.n1_values = {2};
  plan.methods = {Method::Rct1Only};
  const auto r = run_plan(plan, 1);
  ASSERT_EQ(r.results.size(), 3u);
  for (const auto& rep : r.results) {
    EXPECT_TRUE(rep.failed);
    EXPECT_FALSE(rep.failure.empty());
    EXPECT_TRUE(std::isnan(rep.tau_hat[0]));
  }
  const auto table = summarize(r);
  const auto& cell = table.region("quadratic", 2, Method::Rct1Only, Region::OutsideBoth);
  EXPECT_TRUE(cell.missing);
  EXPECT_EQ(cell.failures, 3u);
  EXPECT_TRUE(std::isnan(cell.rmse));
}

TEST(Summarize, IdenticalCurvesHaveZeroWidthBands) {
  ResultSet set;
  const auto spec = ScenarioSpec::defaults(Shape::Linear);
  set.truth["linear"] = {true_tau_poly(1, spec), SupportRegion{}};
  const std::vector<double> xs{-2.0, -1.0, 1.75};
  const std::vector<double> tau{1.0, 2.0, 3.0};
  for (std::size_t rep = 0; rep < 4; ++rep) set.results.push_back(curve("linear", rep, xs, tau));
  const auto table = summarize(set);
  for (const auto& p : table.points) {
    EXPECT_EQ(p.p025, p.p975);
    EXPECT_EQ(p.mean, p.p025);
  }
  const double e1 = std::abs(1.0 - true_tau(1, -2.0, spec));
  const double e2 = std::abs(2.0 - true_tau(1, -1.0, spec));
  const auto& outside = table.region("linear", 100, Method::Rct1Only, Region::OutsideBoth);
  EXPECT_NEAR(outside.rmse, std::sqrt((e1 * e1 + e2 * e2) / 2.0), 1e-12);
  EXPECT_NEAR(outside.median_rmse, outside.rmse, 1e-12);
  const auto& inside = table.region("linear", 100, Method::Rct1Only, Region::InsideRct1);
  EXPECT_NEAR(inside.rmse, std::abs(3.0 - true_tau(1, 1.75, spec)), 1e-12);
  // No grid point falls in this region: statistics are undefined, but the
  // cell itself is not missing.
  const auto& empty = table.region("linear", 100, Method::Rct1Only, Region::InsideRct2Only);
  EXPECT_TRUE(std::isnan(empty.rmse));
  EXPECT_FALSE(empty.missing);
}

TEST(Summarize, OracleCurvesHaveZeroError) {
  ResultSet set;
  const auto spec = ScenarioSpec::defaults(Shape::Quadratic);
  const auto tau = true_tau_poly(1, spec);
  set.truth["quadratic"] = {tau, SupportRegion{}};
  std::vector<double> xs, ys;
  const auto grid = EvalGrid::defaults();
  for (double x : grid.points()) {
    xs.push_back(x);
    ys.push_back(tau(x));
  }
  for (std::size_t rep = 0; rep < 5; ++rep) set.results.push_back(curve("quadratic", rep, xs, ys));
  const auto table = summarize(set);
  for (const auto& r : table.regions) {
    EXPECT_NEAR(r.bias, 0.0, 1e-12);
    EXPECT_NEAR(r.rmse, 0.0, 1e-12);
  }
  EXPECT_LT(mean_curve_max_error(table, "quadratic", 100, Method::Rct1Only, tau, {-3.0, 3.0}),
            1e-12);
}

TEST(Summarize, FailedReplicationsAreExcludedAndCounted) {
  ResultSet set;
  const auto spec = ScenarioSpec::defaults(Shape::Linear);
  set.truth["linear"] = {true_tau_poly(1, spec), SupportRegion{}};
  const std::vector<double> xs{-2.0};
  set.results.push_back(curve("linear", 0, xs, {1.0}));
  auto bad = curve("linear", 1, xs, {std::numeric_limits<double>::quiet_NaN()});
  bad.failed = true;
  set.results.push_back(bad);
  set.results.push_back(curve("linear", 2, xs, {3.0}));
  const auto table = summarize(set);
  ASSERT_EQ(table.points.size(), 1u);
  EXPECT_DOUBLE_EQ(table.points[0].mean, 2.0);
  const auto& cell = table.region("linear", 100, Method::Rct1Only, Region::OutsideBoth);
  EXPECT_EQ(cell.failures, 1u);
  EXPECT_FALSE(cell.missing);
  EXPECT_GE(cell.rmse, std::abs(cell.bias));
}

TEST(Summarize, RmseDominatesBiasAndBandsAreOrdered) {
  const auto table = summarize(run_plan(small_plan(), 2));
  for (const auto& r : table.regions) {
    if (!r.missing) EXPECT_GE(r.rmse + 1e-12, std::abs(r.bias));
  }
  for (const auto& p : table.points) EXPECT_LE(p.p025, p.p975);
  EXPECT_EQ(table.curve("linear", 1000, Method::Hierarchical).size(), small_plan().grid.size());
}

TEST(Csv, ResultsRoundTripGivesIdenticalSummary) {
  const auto original = run_plan(small_plan(), 2);
  std::stringstream buf(results_text(original));
  const auto back = read_results_csv(buf);
  EXPECT_EQ(results_text(back), results_text(original));
  EXPECT_EQ(summary_text(back), summary_text(original));
}

TEST(Csv, SummaryHeaderEmbedsOracleAndSupport) {
  const auto text = summary_text(run_plan(small_plan(), 1));
  EXPECT_EQ(text.rfind("# deconfound-lab v1\n", 0), 0u);
  EXPECT_NE(text.find("# oracle_tau1,linear,-3,3.5,0.75\n"), std::string::npos);
  EXPECT_NE(text.find("# support,quadratic,1.5,2,0,2.5,-3,3\n"), std::string::npos);
  EXPECT_NE(text.find("# block,pointwise\nscenario,n1,method,x,mean,p2.5,p97.5\n"),
            std::string::npos);
  EXPECT_NE(text.find("scenario,n1,method,region,bias,rmse,failures,median_rmse\n"),
            std::string::npos);
}

TEST(Csv, MalformedResultsAreParseErrors) {
  std::stringstream no_header("scenario,n1,method,rep,x,tau_hat,eta_hat\n");
  EXPECT_THROW(read_results_csv(no_header), ParseError);
  std::stringstream bad_method(
      "# deconfound-lab v1\n# oracle_tau1,linear,1\n# support,linear,1.5,2,0,2.5,-3,3\n"
      "scenario,n1,method,rep,x,tau_hat,eta_hat\nlinear,100,bogus,0,0,1,1\n");
  EXPECT_THROW(read_results_csv(bad_method), Error);
}

}  // namespace
}  // namespace deconfound
