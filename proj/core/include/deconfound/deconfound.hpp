#pragma once

// Deconfounding functions: eta_k(x) = tau_k(x) - omega_k(x) is learned from
// trial data, extrapolated, and added back to the observational estimate
// omega-hat_k to give the debiased CATE.

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "deconfound/core_model.hpp"
#include "deconfound/mixedfx.hpp"
#include "deconfound/regress.hpp"

namespace deconfound {

/// y (t - e) / (e (1 - e)); its mean given x is the CATE in a trial that
/// randomizes with probability e. Throws std::domain_error unless 0 < e < 1.
double transformed_outcome(double y, int t, double e);

/// Unit-level signal whose conditional mean is the trial CATE.
enum class SignalKind {
  /// Inverse-propensity transformed outcome.
  TransformedOutcome,
  /// Observed outcome minus the other arm's fitted mean (imputed
  /// counterfactual from per-arm regressions inside the trial).
  ArmRegression,
};

std::string_view to_string(SignalKind kind);
SignalKind parse_signal_kind(std::string_view name);

struct PseudoOutcome {
  double x = 0.0;
  double d = 0.0;
  std::size_t trial = 1;
};

struct SignalOptions {
  SignalKind kind = SignalKind::TransformedOutcome;
  double propensity = 0.5;
  /// Basis of the per-arm regressions used by ArmRegression.
  Basis arm_basis = Basis::polynomial(2);
};

/// d_i = signal_i - omega(x_i) for every unit of the trial.
std::vector<PseudoOutcome> eta_pseudo_outcomes(const RctDataset& rct, const CateModel& omega,
                                               const SignalOptions& options);
/// Transformed-outcome signal with propensity e.
std::vector<PseudoOutcome> eta_pseudo_outcomes(const RctDataset& rct, const CateModel& omega,
                                               double e);

enum class EtaMode { SingleTrial, Hierarchical };
std::string_view to_string(EtaMode mode);

class EtaModel {
 public:
  struct Single {
    Basis basis;
    FitResult fit;
  };

  EtaModel(std::size_t trial, Single single);
  EtaModel(std::vector<std::size_t> trials, MixedFit fit);

  EtaMode mode() const noexcept;
  const std::vector<std::size_t>& trials() const noexcept { return trials_; }
  const Single& single() const;
  const MixedFit& mixed() const;

  /// eta-hat_k(x); defined for every real x. Throws std::out_of_range for a
  /// trial the model was not fitted on.
  double evaluate(std::size_t k, double x) const;

  /// JSON document with mode, bases, coefficients and variance components.
  std::string to_json() const;

 private:
  std::vector<std::size_t> trials_;
  std::variant<Single, MixedFit> model_;
};

/// OLS of d on the basis using one trial's pseudo-outcomes. Throws
/// Underdetermined with fewer points than dim(basis) and propagates
/// RankDeficient.
EtaModel fit_eta_single(const std::vector<PseudoOutcome>& pseudo, const Basis& basis);

/// Mixed model with one group per trial (at least two trials required,
/// ValidationError otherwise).
EtaModel fit_eta_hierarchical(const std::vector<PseudoOutcome>& pseudo, const Basis& f,
                              const Basis& g, const RemlOptions& options = {});

struct CurvePoint {
  double x = 0.0;
  double omega = 0.0;
  double eta = 0.0;
  double tau = 0.0;  // omega + eta
};

/// tau-hat_k(x) = omega-hat_k(x) + eta-hat_k(x) at every grid point.
std::vector<CurvePoint> debias_cate(const CateModel& omega, const EtaModel& eta, std::size_t k,
                                    const EvalGrid& grid);

}  // namespace deconfound
