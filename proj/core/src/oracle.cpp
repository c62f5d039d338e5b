#include "deconfound/oracle.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "deconfound/datagen.hpp"
#include "deconfound/errors.hpp"
#include "json.hpp"

namespace deconfound {

double Polynomial::operator()(double x) const {
  double acc = 0.0;
  for (auto it = coefs.rbegin(); it != coefs.rend(); ++it) acc = acc * x + *it;
  return acc;
}

std::size_t Polynomial::degree() const {
  const auto t = trimmed();
  return t.coefs.empty() ? 0 : t.coefs.size() - 1;
}

Polynomial Polynomial::trimmed() const {
  Polynomial out = *this;
  while (!out.coefs.empty() && out.coefs.back() == 0.0) out.coefs.pop_back();
  return out;
}

namespace {

Polynomial combine(const Polynomial& a, const Polynomial& b, double sign) {
  Polynomial out;
  out.coefs.assign(std::max(a.coefs.size(), b.coefs.size()), 0.0);
  for (std::size_t i = 0; i < a.coefs.size(); ++i) out.coefs[i] += a.coefs[i];
  for (std::size_t i = 0; i < b.coefs.size(); ++i) out.coefs[i] += sign * b.coefs[i];
  return out;
}

void add_term(Polynomial& p, int power, double value) {
  const auto i = static_cast<std::size_t>(power);
  if (p.coefs.size() <= i) p.coefs.resize(i + 1, 0.0);
  p.coefs[i] += value;
}

void check_trial(std::size_t k, const ScenarioSpec& spec) {
  if (k < 1 || k > spec.k_trials || k > spec.outcome_coefs.size() ||
      k > spec.treat_probs.size()) {
    throw std::out_of_range("trial index " + std::to_string(k) + " out of range");
  }
}

}  // namespace

Polynomial operator+(const Polynomial& a, const Polynomial& b) { return combine(a, b, 1.0); }
Polynomial operator-(const Polynomial& a, const Polynomial& b) { return combine(a, b, -1.0); }

double max_abs_diff(const Polynomial& a, const Polynomial& b) {
  double worst = 0.0;
  for (double c : (a - b).coefs) worst = std::max(worst, std::abs(c));
  return worst;
}

double posterior_u(std::size_t k, int t, const ScenarioSpec& spec) {
  check_trial(k, spec);
  const auto& p = spec.treat_probs[k - 1];
  const double like1 = t ? p.given_u1 : 1.0 - p.given_u1;
  const double like0 = t ? p.given_u0 : 1.0 - p.given_u0;
  const double joint1 = like1 * spec.u_prob;
  const double joint0 = like0 * (1.0 - spec.u_prob);
  if (joint1 + joint0 == 0.0) {
    throw std::domain_error("treatment value has zero probability");
  }
  return joint1 / (joint1 + joint0);
}

Polynomial true_tau_poly(std::size_t k, const ScenarioSpec& spec) {
  check_trial(k, spec);
  Polynomial out;
  for (const auto& term : spec.outcome_coefs[k - 1]) {
    if (!term.t) continue;
    add_term(out, term.x_pow, term.coef * (term.u ? spec.u_prob : 1.0));
  }
  return out;
}

Polynomial true_omega_poly(std::size_t k, const ScenarioSpec& spec) {
  check_trial(k, spec);
  const double q1 = posterior_u(k, 1, spec);
  const double q0 = posterior_u(k, 0, spec);
  Polynomial treated, control;
  for (const auto& term : spec.outcome_coefs[k - 1]) {
    const double w1 = term.u ? q1 : 1.0;
    const double w0 = term.u ? q0 : 1.0;
    add_term(treated, term.x_pow, term.coef * w1);
    if (!term.t) add_term(control, term.x_pow, term.coef * w0);
  }
  return treated - control;
}

Polynomial true_eta_poly(std::size_t k, const ScenarioSpec& spec) {
  check_trial(k, spec);
  const double q1 = posterior_u(k, 1, spec);
  const double q0 = posterior_u(k, 0, spec);
  // Only confounder terms survive: treatment-by-U terms contribute
  // (P(U=1) - q1), pure U terms contribute (q0 - q1).
  Polynomial out;
  for (const auto& term : spec.outcome_coefs[k - 1]) {
    if (!term.u) continue;
    // Distributed form: each product is rounded once, so integer-valued
    // coefficients come out exact.
    const double other = term.t ? spec.u_prob : q0;
    add_term(out, term.x_pow, term.coef * other - term.coef * q1);
  }
  return out;
}

double true_tau(std::size_t k, double x, const ScenarioSpec& spec) {
  return true_tau_poly(k, spec)(x);
}
double true_omega(std::size_t k, double x, const ScenarioSpec& spec) {
  return true_omega_poly(k, spec)(x);
}
double true_eta(std::size_t k, double x, const ScenarioSpec& spec) {
  return true_eta_poly(k, spec)(x);
}

OracleCurves oracle_curves(const ScenarioSpec& spec) {
  spec.validate();
  OracleCurves out;
  out.shape = spec.shape;
  for (std::size_t k = 1; k <= spec.k_trials; ++k) {
    out.tau.push_back(true_tau_poly(k, spec));
    out.omega.push_back(true_omega_poly(k, spec));
    out.eta.push_back(true_eta_poly(k, spec));
    out.posterior_treated.push_back(posterior_u(k, 1, spec));
    out.posterior_control.push_back(posterior_u(k, 0, spec));
  }
  return out;
}

namespace {

nlohmann::json poly_json(const Polynomial& p) {
  auto t = p.trimmed();
  if (t.coefs.empty()) t.coefs.push_back(0.0);
  return t.coefs;
}

}  // namespace

std::string to_json(const OracleCurves& curves) {
  nlohmann::json j;
  j["scenario"] = std::string(to_string(curves.shape));
  for (std::size_t i = 0; i < curves.tau.size(); ++i) {
    const auto k = std::to_string(i + 1);
    j["tau" + k] = poly_json(curves.tau[i]);
    j["omega" + k] = poly_json(curves.omega[i]);
    j["eta" + k] = poly_json(curves.eta[i]);
    j["posterior_u_given_t" + k + "_1"] = curves.posterior_treated[i];
    j["posterior_u_given_t" + k + "_0"] = curves.posterior_control[i];
  }
  return j.dump(2);
}

namespace {

// Per-shard accumulators. Index layout: [trial][bin][t][u] and [trial][bin][u].
struct Accumulator {
  std::size_t bins = 0;
  std::size_t trials = 0;
  std::array<double, 2> u_count{};
  std::vector<std::array<std::array<double, 2>, 2>> tu_count;  // [trial][t][u]
  std::vector<double> y_sum, y_cnt;                            // trial*bins*4
  std::vector<double> diff_sum, diff_cnt;                      // trial*bins*2

  Accumulator(std::size_t k, std::size_t b)
      : bins(b),
        trials(k),
        tu_count(k),
        y_sum(k * b * 4, 0.0),
        y_cnt(k * b * 4, 0.0),
        diff_sum(k * b * 2, 0.0),
        diff_cnt(k * b * 2, 0.0) {}

  void merge(const Accumulator& o) {
    for (int u = 0; u < 2; ++u) u_count[u] += o.u_count[u];
    for (std::size_t k = 0; k < trials; ++k) {
      for (int t = 0; t < 2; ++t) {
        for (int u = 0; u < 2; ++u) tu_count[k][t][u] += o.tu_count[k][t][u];
      }
    }
    for (std::size_t i = 0; i < y_sum.size(); ++i) {
      y_sum[i] += o.y_sum[i];
      y_cnt[i] += o.y_cnt[i];
    }
    for (std::size_t i = 0; i < diff_sum.size(); ++i) {
      diff_sum[i] += o.diff_sum[i];
      diff_cnt[i] += o.diff_cnt[i];
    }
  }
};

}  // namespace

BruteForceReport brute_force_check(const ScenarioSpec& spec, std::size_t n, std::uint64_t seed,
                                   const BruteForceOptions& options) {
  spec.validate();
  if (n < 100'000) throw ValidationError("brute-force check needs n >= 100000");
  if (!(options.bin_width > 0.0 && options.bin_width <= options.step + 1e-12)) {
    throw ValidationError("bin width must be positive and no wider than the grid step");
  }
  if (options.shards < 1) throw ValidationError("need at least one shard");

  const EvalGrid grid(options.lo, options.hi, options.step);
  const std::size_t bins = grid.size();
  const std::size_t k_count = spec.k_trials;
  const double half = 0.5 * options.bin_width;

  std::vector<Accumulator> shards(options.shards, Accumulator(k_count, bins));
  auto run_shard = [&](std::size_t s) {
    Accumulator& acc = shards[s];
    const std::size_t count = n / options.shards + (s < n % options.shards ? 1 : 0);
    Rng rng = make_rng({seed, static_cast<std::uint64_t>(spec.shape), kRoleBruteForce, s});
    std::bernoulli_distribution draw_u(spec.u_prob);
    std::uniform_real_distribution<double> draw_x(spec.obs_x_range.lo, spec.obs_x_range.hi);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < count; ++i) {
      const int u = draw_u(rng) ? 1 : 0;
      const double x = draw_x(rng);
      acc.u_count[u] += 1.0;
      const long b = std::lround((x - options.lo) / options.step);
      const bool in_bin = b >= 0 && static_cast<std::size_t>(b) < bins &&
                          std::abs(x - grid.points()[static_cast<std::size_t>(b)]) <= half;
      for (std::size_t k = 0; k < k_count; ++k) {
        const auto& p = spec.treat_probs[k];
        const int t = unit(rng) < (u ? p.given_u1 : p.given_u0) ? 1 : 0;
        const double eps = spec.noise_sd * noise(rng);
        acc.tu_count[k][t][u] += 1.0;
        if (!in_bin) continue;
        const double y1 = outcome_mean(k + 1, x, 1, u, spec) + eps;
        const double y0 = outcome_mean(k + 1, x, 0, u, spec) + eps;
        const std::size_t cell = ((k * bins + static_cast<std::size_t>(b)) * 2 + t) * 2 + u;
        acc.y_sum[cell] += t ? y1 : y0;
        acc.y_cnt[cell] += 1.0;
        const std::size_t dcell = (k * bins + static_cast<std::size_t>(b)) * 2 + u;
        acc.diff_sum[dcell] += y1 - y0;
        acc.diff_cnt[dcell] += 1.0;
      }
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, options.shards);
  if (workers == 1) {
    for (std::size_t s = 0; s < options.shards; ++s) run_shard(s);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t s = next++; s < options.shards; s = next++) run_shard(s);
      });
    }
  }

  // Reduce in shard order so the totals do not depend on scheduling.
  Accumulator total(k_count, bins);
  for (const auto& acc : shards) total.merge(acc);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double p_u1 = total.u_count[1] / (total.u_count[0] + total.u_count[1]);
  const std::array<double, 2> p_u{1.0 - p_u1, p_u1};

  BruteForceReport report;
  report.n = n;
  report.grid = grid.points();
  for (std::size_t k = 0; k < k_count; ++k) {
    BruteForceTrial trial;
    const Polynomial omega = true_omega_poly(k + 1, spec);
    const Polynomial tau = true_tau_poly(k + 1, spec);
    std::array<std::array<double, 2>, 2> w{};  // P(U=u | T=t)
    for (int t = 0; t < 2; ++t) {
      const double tot = total.tu_count[k][t][0] + total.tu_count[k][t][1];
      for (int u = 0; u < 2; ++u) w[t][u] = tot > 0 ? total.tu_count[k][t][u] / tot : 0.0;
    }
    for (std::size_t b = 0; b < bins; ++b) {
      double arm[2] = {0.0, 0.0};
      for (int t = 0; t < 2; ++t) {
        for (int u = 0; u < 2; ++u) {
          if (w[t][u] == 0.0) continue;
          const std::size_t cell = ((k * bins + b) * 2 + t) * 2 + u;
          arm[t] += total.y_cnt[cell] > 0 ? w[t][u] * total.y_sum[cell] / total.y_cnt[cell] : nan;
        }
      }
      double tau_hat = 0.0;
      for (int u = 0; u < 2; ++u) {
        if (p_u[u] == 0.0) continue;
        const std::size_t dcell = (k * bins + b) * 2 + u;
        tau_hat +=
            total.diff_cnt[dcell] > 0 ? p_u[u] * total.diff_sum[dcell] / total.diff_cnt[dcell] : nan;
      }
      const double omega_hat = arm[1] - arm[0];
      trial.omega_hat.push_back(omega_hat);
      trial.tau_hat.push_back(tau_hat);
      const double x = grid.points()[b];
      const double dw = std::abs(omega_hat - omega(x));
      const double dt = std::abs(tau_hat - tau(x));
      trial.max_omega_dev = std::isnan(dw) ? HUGE_VAL : std::max(trial.max_omega_dev, dw);
      trial.max_tau_dev = std::isnan(dt) ? HUGE_VAL : std::max(trial.max_tau_dev, dt);
    }
    report.trials.push_back(std::move(trial));
  }
  return report;
}

std::string to_json(const BruteForceReport& report) {
  nlohmann::json j;
  j["n"] = report.n;
  j["grid"] = report.grid;
  for (std::size_t k = 0; k < report.trials.size(); ++k) {
    const auto& t = report.trials[k];
    const auto key = std::to_string(k + 1);
    j["max_omega_dev" + key] = t.max_omega_dev;
    j["max_tau_dev" + key] = t.max_tau_dev;
    j["omega_hat" + key] = t.omega_hat;
    j["tau_hat" + key] = t.tau_hat;
  }
  return j.dump(2);
}

}  // namespace deconfound
