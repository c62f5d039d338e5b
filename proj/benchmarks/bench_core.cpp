#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "deconfound/datagen.hpp"
#include "deconfound/deconfound.hpp"
#include "deconfound/harness.hpp"
#include "deconfound/mixedfx.hpp"
#include "deconfound/regress.hpp"

using namespace deconfound;

static void BM_GenerateObservational(benchmark::State& state) {
  auto spec = ScenarioSpec::defaults(Shape::Quadratic);
  spec.obs_size = static_cast<std::size_t>(state.range(0));
  std::uint64_t rep = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(gen_observational(spec, {1, 1, kRoleObservational, rep++}));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GenerateObservational)->Arg(1000)->Arg(10000);

static void BM_OlsFit(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = z(rng);
    x.row(i) << 1.0, v, v * v;
    y[i] = 1.0 + 2.0 * v - 0.5 * v * v + z(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(ols_fit(x, y));
}
BENCHMARK(BM_OlsFit)->Arg(1000)->Arg(100000);

// K trials of n units each, random intercept and slope.
static void BM_RemlFit(benchmark::State& state) {
  const auto groups = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> ux(-2.0, 2.0);
  std::vector<MixedObservation> obs;
  for (std::size_t k = 1; k <= groups; ++k) {
    const double g0 = z(rng), g1 = 0.5 * z(rng);
    for (int i = 0; i < 500; ++i) {
      const double x = ux(rng);
      obs.push_back({x, k, 1.0 - 0.5 * x + 0.75 * x * x + g0 + g1 * x + z(rng)});
    }
  }
  const MixedModelSpec spec{Basis::polynomial(2), Basis::polynomial(1), groups};
  for (auto _ : state) benchmark::DoNotOptimize(fit_reml(spec, obs));
}
BENCHMARK(BM_RemlFit)->Arg(2)->Arg(10)->Arg(50);

static void BM_Replication(benchmark::State& state) {
  auto plan = ExperimentPlan::defaults();
  plan.scenarios = {ScenarioSpec::defaults(Shape::Quadratic)};
  plan.n1_values = {1000};
  plan.replications = 1;
  for (auto _ : state) {
    plan.master_seed++;
    benchmark::DoNotOptimize(run_plan(plan, 1));
  }
}
BENCHMARK(BM_Replication)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
