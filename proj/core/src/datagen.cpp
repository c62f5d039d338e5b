#include "deconfound/datagen.hpp"

#include <stdexcept>
#include <string>

namespace deconfound {

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void check_trial(std::size_t k, const ScenarioSpec& spec) {
  if (k < 1 || k > spec.k_trials || k > spec.outcome_coefs.size()) {
    throw std::out_of_range("trial index " + std::to_string(k) + " not in 1.." +
                            std::to_string(spec.k_trials));
  }
}

double ipow(double x, int p) {
  double out = 1.0;
  for (int i = 0; i < p; ++i) out *= x;
  return out;
}

}  // namespace

std::uint64_t derive_seed(const SeedSpec& seed) {
  std::uint64_t h = splitmix64(seed.master_seed);
  h = splitmix64(h ^ splitmix64(seed.scenario_id + 0x1000));
  h = splitmix64(h ^ splitmix64(seed.role + 0x2000));
  h = splitmix64(h ^ splitmix64(seed.replication + 0x3000));
  return h;
}

double outcome_mean(std::size_t k, double x, int t, int u, const ScenarioSpec& spec) {
  check_trial(k, spec);
  double mean = 0.0;
  for (const auto& term : spec.outcome_coefs[k - 1]) {
    if (term.t && t == 0) continue;
    if (term.u && u == 0) continue;
    mean += term.coef * ipow(x, term.x_pow);
  }
  return mean;
}

ObservationalDataset gen_observational(const ScenarioSpec& spec, const SeedSpec& seed) {
  spec.validate();
  Rng rng = make_rng(seed);
  std::bernoulli_distribution draw_u(spec.u_prob);
  std::uniform_real_distribution<double> draw_x(spec.obs_x_range.lo, spec.obs_x_range.hi);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t n = spec.obs_size;
  const std::size_t k_count = spec.k_trials;
  std::vector<double> x(n);
  std::vector<std::uint8_t> u(n);
  std::vector<std::vector<std::uint8_t>> t(k_count, std::vector<std::uint8_t>(n));
  std::vector<std::vector<double>> y(k_count, std::vector<double>(n));

  for (std::size_t i = 0; i < n; ++i) {
    const int ui = draw_u(rng) ? 1 : 0;
    const double xi = draw_x(rng);
    u[i] = static_cast<std::uint8_t>(ui);
    x[i] = xi;
    for (std::size_t k = 0; k < k_count; ++k) {
      const auto& p = spec.treat_probs[k];
      const double prob = ui ? p.given_u1 : p.given_u0;
      t[k][i] = unit(rng) < prob ? 1 : 0;
    }
    for (std::size_t k = 0; k < k_count; ++k) {
      y[k][i] = outcome_mean(k + 1, xi, t[k][i], ui, spec) + spec.noise_sd * noise(rng);
    }
  }
  return ObservationalDataset(std::move(x), std::move(t), std::move(y), std::move(u));
}

RctDataset gen_rct(std::size_t k, const ScenarioSpec& spec, const SeedSpec& seed) {
  check_trial(k, spec);
  spec.validate();
  Rng rng = make_rng(seed);
  const Interval range = spec.rct_x_ranges[k - 1];
  std::bernoulli_distribution draw_u(spec.u_prob);
  std::uniform_real_distribution<double> draw_x(range.lo, range.hi);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::size_t n = spec.rct_sizes[k - 1];
  RctDataset data;
  data.trial_id = k;
  data.x.resize(n);
  data.t.resize(n);
  data.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int ui = draw_u(rng) ? 1 : 0;
    const double xi = draw_x(rng);
    const int ti = unit(rng) < spec.rct_propensity ? 1 : 0;
    data.x[i] = xi;
    data.t[i] = static_cast<std::uint8_t>(ti);
    data.y[i] = outcome_mean(k, xi, ti, ui, spec) + spec.noise_sd * noise(rng);
  }
  return data;
}

}  // namespace deconfound
