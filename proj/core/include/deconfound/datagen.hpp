#pragma once

// Seeded synthetic generation of the confounded cohort and the trials.

#include <cstddef>
#include <cstdint>
#include <random>

#include "deconfound/core_model.hpp"

namespace deconfound {

/// Stream roles; trial k uses role k.
inline constexpr std::uint64_t kRoleObservational = 0;
inline constexpr std::uint64_t kRoleBruteForce = std::uint64_t{1} << 32;
inline constexpr std::uint64_t role_trial(std::size_t k) { return k; }

/// Labels a random stream. Identical labels give identical streams.
struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t scenario_id = 0;
  std::uint64_t role = kRoleObservational;
  std::uint64_t replication = 0;
};

/// Stable 64-bit hash of all labels (splitmix64 chaining).
std::uint64_t derive_seed(const SeedSpec& seed);

using Rng = std::mt19937_64;
inline Rng make_rng(const SeedSpec& seed) { return Rng(derive_seed(seed)); }

/// E[Y | k] of the scenario at (x, t, u). k is 1-based; throws
/// std::out_of_range for an unknown trial.
double outcome_mean(std::size_t k, double x, int t, int u, const ScenarioSpec& spec);

/// n0 rows: u ~ Bern(u_prob), x ~ U(obs_x_range), t_k | u independent,
/// y_k = E[Y | k](x, t_k, u) + N(0, noise_sd).
ObservationalDataset gen_observational(const ScenarioSpec& spec, const SeedSpec& seed);

/// n_k rows of trial k: x ~ U(trial range), t ~ Bern(rct_propensity). A
/// confounder is drawn for every unit and then discarded.
RctDataset gen_rct(std::size_t k, const ScenarioSpec& spec, const SeedSpec& seed);

}  // namespace deconfound
