#include <cmath>
#include <random>
#include <stdexcept>

#include <gtest/gtest.h>

#include "deconfound/core_model.hpp"
#include "deconfound/errors.hpp"

namespace deconfound {
namespace {

TEST(Basis, ExpandEvaluatesMonomials) {
  const Basis quad({0, 1, 2});
  EXPECT_EQ(quad.expand(2.0), (Eigen::Vector3d(1, 2, 4)));
  EXPECT_EQ(quad.expand(0.0), (Eigen::Vector3d(1, 0, 0)));
  EXPECT_EQ(expand(-3.0, Basis({0, 1})), (Eigen::Vector2d(1, -3)));
}

TEST(Basis, InterceptOnlyIsOneEverywhere) {
  const Basis one({0});
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 200; ++i) {
    const auto v = one.expand(u(rng));
    ASSERT_EQ(v.size(), 1);
    EXPECT_EQ(v[0], 1.0);
  }
}

TEST(Basis, SparseDegreesSkipPowers) {
  EXPECT_EQ(Basis({1, 3}).expand(2.0), (Eigen::Vector2d(2, 8)));
}

TEST(Basis, RejectsInvalidDegreeLists) {
  EXPECT_THROW(Basis({}), ValidationError);
  EXPECT_THROW(Basis({1, 1}), ValidationError);
  EXPECT_THROW(Basis({2, 1}), ValidationError);
  EXPECT_THROW(Basis({-1, 0}), ValidationError);
}

TEST(Basis, RejectsNonFiniteX) {
  EXPECT_THROW(Basis({0, 1}).expand(std::nan("")), std::domain_error);
  EXPECT_THROW(Basis({0, 1}).expand(INFINITY), std::domain_error);
}

TEST(Basis, ParseAndMerge) {
  EXPECT_EQ(Basis::parse("0,1,2"), Basis::polynomial(2));
  EXPECT_EQ(Basis::parse(" 0, 2 "), Basis({0, 2}));
  EXPECT_THROW(Basis::parse("0,,1"), ValidationError);
  EXPECT_THROW(Basis::parse("a"), ValidationError);
  EXPECT_EQ(Basis::merge(Basis({0, 1, 2}), Basis({0, 1})), Basis::polynomial(2));
  EXPECT_EQ(Basis::merge(Basis({0, 2}), Basis({1})), Basis::polynomial(2));
}

TEST(EvalGrid, DefaultGridHas121PointsEndingAtHi) {
  const auto grid = EvalGrid::defaults();
  ASSERT_EQ(grid.size(), 121u);
  EXPECT_EQ(grid.points().front(), -3.0);
  EXPECT_NEAR(grid.points().back(), 3.0, 1e-12);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    EXPECT_GT(grid.points()[i], grid.points()[i - 1]);
  }
}

TEST(EvalGrid, StopsAtOrBelowHi) {
  const EvalGrid grid(0.0, 1.0, 0.3);
  ASSERT_EQ(grid.size(), 4u);
  EXPECT_LE(grid.points().back(), 1.0);
}

TEST(EvalGrid, ValidatesAndParses) {
  EXPECT_THROW(EvalGrid(1.0, 1.0, 0.1), ValidationError);
  EXPECT_THROW(EvalGrid(0.0, 1.0, 0.0), ValidationError);
  EXPECT_THROW(EvalGrid(0.0, 1.0, -1.0), ValidationError);
  const auto g = EvalGrid::parse("-1:1:0.5");
  EXPECT_EQ(g.size(), 5u);
  EXPECT_THROW(EvalGrid::parse("-1:1"), ValidationError);
  EXPECT_THROW(EvalGrid::parse("-1:1:0.5:2"), ValidationError);
}

TEST(SupportRegion, LabelsFromTrialSupports) {
  const SupportRegion s;
  EXPECT_EQ(region_of(1.75, s), Region::InsideRct1);
  EXPECT_EQ(region_of(0.5, s), Region::InsideRct2Only);
  EXPECT_EQ(region_of(-2.0, s), Region::OutsideBoth);
}

TEST(SupportRegion, BoundariesBelongToInnermostRegion) {
  const SupportRegion s;
  EXPECT_EQ(region_of(1.5, s), Region::InsideRct1);
  EXPECT_EQ(region_of(2.0, s), Region::InsideRct1);
  EXPECT_EQ(region_of(0.0, s), Region::InsideRct2Only);
  EXPECT_EQ(region_of(2.5, s), Region::InsideRct2Only);
  EXPECT_EQ(region_of(-3.0, s), Region::OutsideBoth);
  EXPECT_EQ(region_of(3.0, s), Region::OutsideBoth);
}

TEST(SupportRegion, OutsideTargetIsRangeError) {
  const SupportRegion s;
  EXPECT_THROW(region_of(3.0001, s), std::out_of_range);
  EXPECT_THROW(region_of(-7.0, s), std::out_of_range);
}

TEST(SupportRegion, PartitionCoversTargetExactlyOnce) {
  const SupportRegion s;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(s.target.lo, s.target.hi);
  for (int i = 0; i < 5000; ++i) {
    const double x = u(rng);
    const Region r = region_of(x, s);
    const int hits = (r == Region::InsideRct1 ? 1 : 0) + (r == Region::InsideRct2Only ? 1 : 0) +
                     (r == Region::OutsideBoth ? 1 : 0);
    EXPECT_EQ(hits, 1);
    EXPECT_EQ(r == Region::InsideRct1, s.rct1.contains(x));
    EXPECT_EQ(r == Region::OutsideBoth, !s.rct1.contains(x) && !s.rct2.contains(x));
  }
}

TEST(SupportRegion, DefaultsNestAndComeFromScenario) {
  const SupportRegion s = SupportRegion::from_scenario(ScenarioSpec::defaults(Shape::Linear));
  EXPECT_EQ(s, SupportRegion{});
  EXPECT_NO_THROW(s.validate());
  EXPECT_LE(s.rct2.lo, s.rct1.lo);
  EXPECT_LE(s.rct1.hi, s.rct2.hi);
}

TEST(ScenarioSpec, DefaultsMatchStudyDesign) {
  for (Shape shape : {Shape::Linear, Shape::Quadratic}) {
    const auto spec = ScenarioSpec::defaults(shape);
    EXPECT_NO_THROW(spec.validate());
    EXPECT_EQ(spec.obs_size, 50'000u);
    EXPECT_EQ(spec.rct_sizes.at(1), 5'000u);
    EXPECT_EQ(spec.obs_x_range, (Interval{-3.0, 3.0}));
    EXPECT_EQ(spec.treat_probs.at(0), (TreatProbs{0.7, 0.3}));
    EXPECT_EQ(spec.treat_probs.at(1), (TreatProbs{0.25, 0.75}));
    EXPECT_EQ(spec.noise_sd, 1.0);
    EXPECT_EQ(spec.rct_x_ranges.at(0), (Interval{1.5, 2.0}));
    EXPECT_EQ(spec.rct_x_ranges.at(1), (Interval{0.0, 2.5}));
  }
  EXPECT_EQ(ScenarioSpec::defaults(Shape::Linear).outcome_coefs[0].size(), 7u);
  EXPECT_EQ(ScenarioSpec::defaults(Shape::Quadratic).outcome_coefs[0].size(), 8u);
}

TEST(ScenarioSpec, JsonRoundTripIsExact) {
  for (Shape shape : {Shape::Linear, Shape::Quadratic}) {
    const auto spec = ScenarioSpec::defaults(shape);
    const auto text = spec.to_json();
    EXPECT_EQ(ScenarioSpec::from_json(text), spec);
    EXPECT_EQ(ScenarioSpec::from_json(text).to_json(), text);
  }
}

TEST(ScenarioSpec, RandomizedRoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::uniform_real_distribution<double> p(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto spec = ScenarioSpec::defaults(trial % 2 ? Shape::Quadratic : Shape::Linear);
    spec.noise_sd = std::abs(u(rng)) + 1e-3;
    spec.treat_probs[0] = {p(rng), p(rng)};
    spec.u_prob = p(rng);
    for (auto& term : spec.outcome_coefs[1]) term.coef = u(rng);
    EXPECT_EQ(ScenarioSpec::from_json(spec.to_json()), spec);
  }
}

TEST(ScenarioSpec, PartialJsonKeepsDefaults) {
  const auto spec = ScenarioSpec::from_json(R"({"shape": "quadratic", "obs_size": 1000})");
  auto expected = ScenarioSpec::defaults(Shape::Quadratic);
  expected.obs_size = 1000;
  EXPECT_EQ(spec, expected);
  EXPECT_THROW(ScenarioSpec::from_json(R"({"bogus": 1})"), ParseError);
  EXPECT_THROW(ScenarioSpec::from_json("{not json"), ParseError);
}

TEST(ScenarioSpec, ValidationCatchesBrokenInvariants) {
  auto bad = ScenarioSpec::defaults(Shape::Linear);
  bad.treat_probs[0].given_u1 = 1.2;
  EXPECT_THROW(bad.validate(), ValidationError);

  bad = ScenarioSpec::defaults(Shape::Linear);
  bad.rct_sizes[0] = 0;
  EXPECT_THROW(bad.validate(), ValidationError);

  bad = ScenarioSpec::defaults(Shape::Linear);
  bad.noise_sd = -1.0;
  EXPECT_THROW(bad.validate(), ValidationError);

  bad = ScenarioSpec::defaults(Shape::Linear);
  bad.rct_x_ranges[1] = {-4.0, 0.0};
  EXPECT_THROW(bad.validate(), ValidationError);

  bad = ScenarioSpec::defaults(Shape::Linear);
  bad.rct_x_ranges[0] = {1.0, 1.0};
  EXPECT_THROW(bad.validate(), ValidationError);

  bad = ScenarioSpec::defaults(Shape::Linear);
  bad.rct_sizes.pop_back();
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(ObservationalDataset, SlicesExposeNoConfounder) {
  ObservationalDataset data({0.0, 1.0}, {{0, 1}, {1, 0}}, {{1.0, 2.0}, {3.0, 4.0}},
                            std::vector<std::uint8_t>{1, 0});
  const TreatmentSlice s = data.slice(2);
  EXPECT_EQ(s.t[0], 1);
  EXPECT_EQ(s.y[1], 4.0);
  EXPECT_THROW(data.slice(3), std::out_of_range);
  EXPECT_THROW(data.slice(0), std::out_of_range);
  EXPECT_TRUE(data.has_oracle_u());
  EXPECT_EQ(data.oracle_u()[0], 1);
}

TEST(ObservationalDataset, RejectsNonBinaryColumns) {
  EXPECT_THROW(ObservationalDataset({0.0}, {{2}}, {{1.0}}, std::nullopt), ValidationError);
  EXPECT_THROW(ObservationalDataset({0.0}, {{1}}, {{1.0}}, std::vector<std::uint8_t>{3}),
               ValidationError);
  EXPECT_THROW(ObservationalDataset({0.0, 1.0}, {{1}}, {{1.0}}, std::nullopt), ValidationError);
}

}  // namespace
}  // namespace deconfound
