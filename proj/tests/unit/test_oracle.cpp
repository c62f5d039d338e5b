#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "deconfound/oracle.hpp"

namespace deconfound {
namespace {

// Hand-derived closed forms. Arms differ in their U-terms only through
// the confounder mean: E[U] = 0.5 for tau, E[U | T_k = t] for omega.
struct Expected {
  std::vector<double> tau1, omega1, eta1, tau2, omega2, eta2;
};

Expected expected(Shape shape) {
  if (shape == Shape::Linear) {
    return {{-3, 3.5, 0.75}, {-5, 4.5, 0.75}, {2, -1}, {3, -2.5, 1}, {2, -0.5, 1}, {1, -2}};
  }
  return {{-3, 3.5, 2.625}, {-5, 4.5, 3.375}, {2, -1, -0.75},
          {},               {},               {1, -2, -0.75}};
}

void expect_coefs(const Polynomial& p, const std::vector<double>& c) {
  const auto t = p.trimmed();
  ASSERT_EQ(t.coefs.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(t.coefs[i], c[i]) << "x^" << i;
}

TEST(Posterior, BayesInversion) {
  const auto spec = ScenarioSpec::defaults(Shape::Linear);
  EXPECT_NEAR(posterior_u(1, 1, spec), 0.7, 1e-15);
  EXPECT_NEAR(posterior_u(2, 1, spec), 0.25, 1e-15);
  EXPECT_NEAR(posterior_u(1, 0, spec), 0.3, 1e-15);
  EXPECT_NEAR(posterior_u(2, 0, spec), 0.75, 1e-15);

  auto skewed = spec;
  skewed.u_prob = 0.2;
  const double p = 0.7 * 0.2 / (0.7 * 0.2 + 0.3 * 0.8);
  EXPECT_NEAR(posterior_u(1, 1, skewed), p, 1e-15);
}

TEST(ClosedForms, LinearScenario) {
  const auto spec = ScenarioSpec::defaults(Shape::Linear);
  const auto e = expected(Shape::Linear);
  expect_coefs(true_tau_poly(1, spec), e.tau1);
  expect_coefs(true_omega_poly(1, spec), e.omega1);
  expect_coefs(true_eta_poly(1, spec), e.eta1);
  expect_coefs(true_tau_poly(2, spec), e.tau2);
  expect_coefs(true_omega_poly(2, spec), e.omega2);
  expect_coefs(true_eta_poly(2, spec), e.eta2);
  EXPECT_DOUBLE_EQ(true_tau(1, 0.0, spec), -3.0);
  EXPECT_DOUBLE_EQ(true_tau(1, 2.0, spec), 7.0);
  EXPECT_DOUBLE_EQ(true_omega(1, 0.0, spec), -5.0);
  EXPECT_DOUBLE_EQ(true_omega(2, 1.0, spec), 2.5);
  EXPECT_DOUBLE_EQ(true_eta(2, 1.0, spec), -1.0);
}

TEST(ClosedForms, QuadraticScenario) {
  const auto spec = ScenarioSpec::defaults(Shape::Quadratic);
  const auto e = expected(Shape::Quadratic);
  expect_coefs(true_tau_poly(1, spec), e.tau1);
  expect_coefs(true_omega_poly(1, spec), e.omega1);
  expect_coefs(true_eta_poly(1, spec), e.eta1);
  expect_coefs(true_eta_poly(2, spec), e.eta2);
  EXPECT_DOUBLE_EQ(true_tau(1, -3.0, spec), 10.125);
  EXPECT_DOUBLE_EQ(true_eta(1, 2.0, spec), -3.0);
  EXPECT_DOUBLE_EQ(true_eta(2, 0.0, spec), 1.0);
}

TEST(ClosedForms, IdentityHoldsCoefficientWise) {
  for (Shape shape : {Shape::Linear, Shape::Quadratic}) {
    const auto spec = ScenarioSpec::defaults(shape);
    for (std::size_t k = 1; k <= 2; ++k) {
      const auto diff = true_tau_poly(k, spec) - true_omega_poly(k, spec);
      EXPECT_LE(max_abs_diff(diff, true_eta_poly(k, spec)), 1e-12);
      const auto grid = EvalGrid::defaults();
      for (double x : grid.points()) {
        EXPECT_NEAR(true_tau(k, x, spec) - true_omega(k, x, spec), true_eta(k, x, spec), 1e-9);
      }
    }
  }
}

TEST(ClosedForms, IdentityHoldsForArbitraryCoefficients) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> c(-5, 5);
  std::uniform_real_distribution<double> p(0.05, 0.95);
  for (int trial = 0; trial < 100; ++trial) {
    auto spec = ScenarioSpec::defaults(trial % 2 ? Shape::Linear : Shape::Quadratic);
    spec.u_prob = p(rng);
    for (auto& tp : spec.treat_probs) tp = {p(rng), p(rng)};
    for (auto& terms : spec.outcome_coefs)
      for (auto& term : terms) term.coef = c(rng);
    for (std::size_t k = 1; k <= 2; ++k) {
      const auto diff = true_tau_poly(k, spec) - true_omega_poly(k, spec);
      EXPECT_LE(max_abs_diff(diff, true_eta_poly(k, spec)), 1e-12);
    }
  }
}

TEST(OracleCurves, JsonCarriesEveryCurve) {
  const auto curves = oracle_curves(ScenarioSpec::defaults(Shape::Quadratic));
  EXPECT_EQ(curves.tau.size(), 2u);
  EXPECT_DOUBLE_EQ(curves.posterior_treated[1], 0.25);
  EXPECT_DOUBLE_EQ(curves.posterior_control[0], 0.3);
  const auto json = to_json(curves);
  for (const char* key : {"\"tau1\"", "\"omega2\"", "\"eta1\"", "\"quadratic\""}) {
    EXPECT_NE(json.find(key), std::string::npos) << key;
  }
}

TEST(BruteForce, AgreesWithClosedFormsAtOneMillion) {
  BruteForceOptions opt;
  opt.workers = 4;
  const auto report = brute_force_check(ScenarioSpec::defaults(Shape::Linear), 1'000'000, 7, opt);
  ASSERT_EQ(report.trials.size(), 2u);
  ASSERT_EQ(report.grid.size(), 51u);
  EXPECT_LT(report.trials[0].max_omega_dev, 0.1);
  EXPECT_LT(report.trials[0].max_tau_dev, 0.05);
}

TEST(BruteForce, NoiselessDeviationsStayWithinBinningBias) {
  auto spec = ScenarioSpec::defaults(Shape::Quadratic);
  spec.noise_sd = 0.0;
  BruteForceOptions opt;
  opt.workers = 4;
  const auto report = brute_force_check(spec, 4'000'000, 3, opt);
  for (const auto& t : report.trials) {
    EXPECT_LT(t.max_omega_dev, 0.02);
    EXPECT_LT(t.max_tau_dev, 0.02);
  }
}

TEST(BruteForce, ResultIndependentOfWorkers) {
  const auto spec = ScenarioSpec::defaults(Shape::Linear);
  BruteForceOptions one, many;
  many.workers = 5;
  EXPECT_EQ(to_json(brute_force_check(spec, 100'000, 1, one)),
            to_json(brute_force_check(spec, 100'000, 1, many)));
}

TEST(BruteForce, DeviationShrinksLikeInverseRootN) {
  const auto spec = ScenarioSpec::defaults(Shape::Linear);
  BruteForceOptions opt;
  opt.workers = 4;
  auto mean_dev = [&](std::size_t n) {
    double s = 0.0;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      const auto r = brute_force_check(spec, n, seed, opt);
      s += r.trials[0].max_omega_dev + r.trials[1].max_omega_dev;
    }
    return s / 8.0;
  };
  const double d1 = mean_dev(100'000), d2 = mean_dev(400'000), d3 = mean_dev(1'600'000);
  EXPECT_GT(d1, d2);
  EXPECT_GT(d2, d3);
  // Ideal ratio is 4 over a 16x change in n.
  EXPECT_GT(d1 / d3, 2.5);
  EXPECT_LT(d1 / d3, 6.5);
}

TEST(BruteForce, RejectsSmallSamples) {
  EXPECT_THROW(brute_force_check(ScenarioSpec::defaults(Shape::Linear), 99'999, 1),
               std::exception);
}

}  // namespace
}  // namespace deconfound
