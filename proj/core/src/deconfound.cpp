#include "deconfound/deconfound.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "deconfound/errors.hpp"
#include "json.hpp"

namespace deconfound {

double transformed_outcome(double y, int t, double e) {
  if (!(e > 0.0 && e < 1.0)) throw std::domain_error("propensity must lie in (0, 1)");
  return y * (static_cast<double>(t) - e) / (e * (1.0 - e));
}

std::string_view to_string(SignalKind kind) {
  return kind == SignalKind::TransformedOutcome ? "transformed" : "arm";
}

SignalKind parse_signal_kind(std::string_view name) {
  if (name == "transformed") return SignalKind::TransformedOutcome;
  if (name == "arm") return SignalKind::ArmRegression;
  throw ValidationError("unknown signal kind '" + std::string(name) + "'");
}

std::string_view to_string(EtaMode mode) {
  return mode == EtaMode::SingleTrial ? "single" : "hierarchical";
}

std::vector<PseudoOutcome> eta_pseudo_outcomes(const RctDataset& rct, const CateModel& omega,
                                               const SignalOptions& options) {
  std::vector<PseudoOutcome> out;
  if (rct.size() == 0) return out;
  out.reserve(rct.size());

  if (options.kind == SignalKind::TransformedOutcome) {
    for (std::size_t i = 0; i < rct.size(); ++i) {
      const double signal = transformed_outcome(rct.y[i], rct.t[i], options.propensity);
      out.push_back({rct.x[i], signal - omega.cate(rct.x[i]), rct.trial_id});
    }
    return out;
  }

  // Treated unit: y - mu0(x); control unit: mu1(x) - y.
  const CateModel arms = fit_cate_regression(rct.slice(), options.arm_basis);
  for (std::size_t i = 0; i < rct.size(); ++i) {
    const double x = rct.x[i];
    const double signal =
        rct.t[i] ? rct.y[i] - arms.arm_mean(x, 0) : arms.arm_mean(x, 1) - rct.y[i];
    out.push_back({x, signal - omega.cate(x), rct.trial_id});
  }
  return out;
}

std::vector<PseudoOutcome> eta_pseudo_outcomes(const RctDataset& rct, const CateModel& omega,
                                               double e) {
  SignalOptions options;
  options.propensity = e;
  return eta_pseudo_outcomes(rct, omega, options);
}

EtaModel::EtaModel(std::size_t trial, Single single)
    : trials_{trial}, model_(std::move(single)) {}

EtaModel::EtaModel(std::vector<std::size_t> trials, MixedFit fit)
    : trials_(std::move(trials)), model_(std::move(fit)) {
  if (trials_.size() != std::get<MixedFit>(model_).gamma.size()) {
    throw ValidationError("trial list does not match fitted groups");
  }
}

EtaMode EtaModel::mode() const noexcept {
  return std::holds_alternative<Single>(model_) ? EtaMode::SingleTrial : EtaMode::Hierarchical;
}

const EtaModel::Single& EtaModel::single() const {
  if (const auto* s = std::get_if<Single>(&model_)) return *s;
  throw std::logic_error("eta model is hierarchical");
}

const MixedFit& EtaModel::mixed() const {
  if (const auto* m = std::get_if<MixedFit>(&model_)) return *m;
  throw std::logic_error("eta model is single-trial");
}

double EtaModel::evaluate(std::size_t k, double x) const {
  const auto it = std::ranges::find(trials_, k);
  if (it == trials_.end()) {
    throw std::out_of_range("eta model was not fitted on trial " + std::to_string(k));
  }
  if (const auto* s = std::get_if<Single>(&model_)) {
    return s->fit.coefs.dot(s->basis.expand(x));
  }
  const auto group = static_cast<std::size_t>(it - trials_.begin()) + 1;
  return predict_group(std::get<MixedFit>(model_), group, x);
}

namespace {

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

}  // namespace

std::string EtaModel::to_json() const {
  nlohmann::json j;
  j["mode"] = std::string(to_string(mode()));
  j["trials"] = trials_;
  if (const auto* s = std::get_if<Single>(&model_)) {
    j["basis"] = s->basis.degrees();
    j["coefs"] = vector_json(s->fit.coefs);
    j["residual_variance"] = s->fit.residual_variance;
    j["n"] = s->fit.n;
    j["rank"] = s->fit.rank;
  } else {
    const auto& m = std::get<MixedFit>(model_);
    j["f"] = m.spec.f.degrees();
    j["g"] = m.spec.g.degrees();
    j["beta"] = vector_json(m.beta);
    j["gamma"] = nlohmann::json::object();
    for (std::size_t i = 0; i < trials_.size(); ++i) {
      j["gamma"][std::to_string(trials_[i])] = vector_json(m.gamma[i]);
    }
    nlohmann::json d = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.vc.D.rows(); ++r) d.push_back(vector_json(m.vc.D.row(r)));
    j["D"] = std::move(d);
    j["sigma2"] = m.vc.sigma2;
    j["converged"] = m.converged;
    j["reml_deviance"] = m.reml_deviance;
    j["n"] = m.n;
  }
  return j.dump(2);
}

EtaModel fit_eta_single(const std::vector<PseudoOutcome>& pseudo, const Basis& basis) {
  if (pseudo.size() < basis.dim()) {
    throw Underdetermined("single-trial eta fit needs at least " + std::to_string(basis.dim()) +
                          " pseudo-outcomes, got " + std::to_string(pseudo.size()));
  }
  const std::size_t trial = pseudo.front().trial;
  std::vector<double> xs;
  Eigen::VectorXd d(static_cast<Eigen::Index>(pseudo.size()));
  xs.reserve(pseudo.size());
  for (std::size_t i = 0; i < pseudo.size(); ++i) {
    if (pseudo[i].trial != trial) {
      throw ValidationError("single-trial eta fit received several trials");
    }
    xs.push_back(pseudo[i].x);
    d[static_cast<Eigen::Index>(i)] = pseudo[i].d;
  }
  FitResult fit = ols_fit(basis.design(xs), d);
  return EtaModel(trial, EtaModel::Single{basis, std::move(fit)});
}

EtaModel fit_eta_hierarchical(const std::vector<PseudoOutcome>& pseudo, const Basis& f,
                              const Basis& g, const RemlOptions& options) {
  std::vector<std::size_t> trials;
  for (const auto& p : pseudo) trials.push_back(p.trial);
  std::ranges::sort(trials);
  trials.erase(std::unique(trials.begin(), trials.end()), trials.end());
  if (trials.size() < 2) {
    throw ValidationError("hierarchical eta fit needs pseudo-outcomes from at least two trials");
  }

  std::vector<MixedObservation> obs;
  obs.reserve(pseudo.size());
  for (const auto& p : pseudo) {
    const auto group = static_cast<std::size_t>(std::ranges::lower_bound(trials, p.trial) -
                                                trials.begin()) + 1;
    obs.push_back({p.x, group, p.d});
  }
  MixedModelSpec spec{f, g, trials.size()};
  return EtaModel(std::move(trials), fit_reml(spec, obs, options));
}

std::vector<CurvePoint> debias_cate(const CateModel& omega, const EtaModel& eta, std::size_t k,
                                    const EvalGrid& grid) {
  std::vector<CurvePoint> curve;
  curve.reserve(grid.size());
  for (double x : grid.points()) {
    const double w = omega.cate(x);
    const double e = eta.evaluate(k, x);
    curve.push_back({x, w, e, w + e});
  }
  return curve;
}

}  // namespace deconfound
