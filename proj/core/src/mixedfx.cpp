#include "deconfound/mixedfx.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "deconfound/errors.hpp"

namespace deconfound {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index idx(std::size_t v) { return static_cast<Index>(v); }

}  // namespace

RemlObjective::RemlObjective(const MixedModelSpec& spec, const std::vector<MixedObservation>& obs,
                             const RemlOptions& options)
    : p_(spec.f.dim()),
      q_(spec.g.dim()),
      n_(obs.size()),
      max_log_scale_(0.5 * std::log(options.max_relative_scale)),
      max_offdiag_(std::sqrt(options.max_relative_scale)),
      min_log_scale_(options.min_log_scale) {
  if (spec.groups < 1) throw ValidationError("mixed model needs at least one group");
  if (n_ <= p_ + q_) {
    throw Underdetermined("mixed model needs more than " + std::to_string(p_ + q_) +
                          " observations, got " + std::to_string(n_));
  }

  xtx_ = MatrixXd::Zero(idx(p_), idx(p_));
  xty_ = VectorXd::Zero(idx(p_));
  groups_.assign(spec.groups, GroupStats{MatrixXd::Zero(idx(q_), idx(q_)),
                                         MatrixXd::Zero(idx(q_), idx(p_)),
                                         VectorXd::Zero(idx(q_))});
  std::vector<std::size_t> counts(spec.groups, 0);
  VectorXd fx(idx(p_)), gx(idx(q_));
  MatrixXd design(idx(n_), idx(p_));
  for (std::size_t i = 0; i < n_; ++i) {
    const auto& o = obs[i];
    if (o.group < 1 || o.group > spec.groups) {
      throw ValidationError("observation group " + std::to_string(o.group) + " not in 1.." +
                            std::to_string(spec.groups));
    }
    if (!std::isfinite(o.value)) throw ValidationError("mixed model response must be finite");
    spec.f.expand_into(o.x, fx);
    spec.g.expand_into(o.x, gx);
    design.row(idx(i)) = fx.transpose();
    auto& gs = groups_[o.group - 1];
    xtx_.noalias() += fx * fx.transpose();
    xty_ += o.value * fx;
    yty_ += o.value * o.value;
    gs.ztz.noalias() += gx * gx.transpose();
    gs.ztx.noalias() += gx * fx.transpose();
    gs.zty += o.value * gx;
    ++counts[o.group - 1];
  }
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) {
      throw ValidationError("group " + std::to_string(k + 1) + " has no observations");
    }
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (static_cast<std::size_t>(qr.rank()) < p_) {
    throw RankDeficient(static_cast<std::size_t>(qr.rank()), p_);
  }
}

MatrixXd RemlObjective::factor(const VectorXd& theta) const {
  if (static_cast<std::size_t>(theta.size()) != parameter_count()) {
    throw std::invalid_argument("wrong number of variance parameters");
  }
  MatrixXd lambda = MatrixXd::Zero(idx(q_), idx(q_));
  Index pos = 0;
  for (Index j = 0; j < idx(q_); ++j) {
    for (Index i = j; i < idx(q_); ++i) {
      const double v = theta[pos++];
      if (i == j) {
        lambda(i, j) = std::exp(std::clamp(v, min_log_scale_, max_log_scale_));
      } else {
        lambda(i, j) = std::clamp(v, -max_offdiag_, max_offdiag_);
      }
    }
  }
  return lambda;
}

VectorXd RemlObjective::parameters_for(const MatrixXd& relative_cov) const {
  Eigen::LLT<MatrixXd> llt(relative_cov);
  if (llt.info() != Eigen::Success) {
    throw NumericalFailure("relative covariance is not positive definite");
  }
  const MatrixXd l = llt.matrixL();
  VectorXd theta(idx(parameter_count()));
  Index pos = 0;
  for (Index j = 0; j < idx(q_); ++j) {
    for (Index i = j; i < idx(q_); ++i) {
      theta[pos++] = i == j ? std::log(l(i, j)) : l(i, j);
    }
  }
  return theta;
}

bool RemlObjective::solve_into(const MatrixXd& lambda, Solution* out) const {
  const std::size_t k_count = groups_.size();
  const auto p = idx(p_);
  const auto q = idx(q_);
  const double df = static_cast<double>(n_ - p_);

  double logdet_z = 0.0;
  MatrixXd a = xtx_;
  VectorXd b = xty_;
  double cu_norm = 0.0;
  std::vector<Eigen::LLT<MatrixXd>> factors;
  std::vector<MatrixXd> rzx(k_count);
  std::vector<VectorXd> cu(k_count);
  factors.reserve(k_count);

  const MatrixXd eye = MatrixXd::Identity(q, q);
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto& gs = groups_[k];
    MatrixXd m = lambda.transpose() * gs.ztz * lambda + eye;
    factors.emplace_back(m);
    const auto& llt = factors.back();
    if (llt.info() != Eigen::Success) return false;
    const MatrixXd l = llt.matrixL();
    for (Index i = 0; i < q; ++i) logdet_z += 2.0 * std::log(l(i, i));
    rzx[k] = llt.matrixL().solve(lambda.transpose() * gs.ztx);
    cu[k] = llt.matrixL().solve(lambda.transpose() * gs.zty);
    a.noalias() -= rzx[k].transpose() * rzx[k];
    b.noalias() -= rzx[k].transpose() * cu[k];
    cu_norm += cu[k].squaredNorm();
  }

  Eigen::LLT<MatrixXd> fixed(a);
  if (fixed.info() != Eigen::Success) return false;
  const MatrixXd rx = fixed.matrixL();
  double logdet_x = 0.0;
  for (Index i = 0; i < p; ++i) logdet_x += 2.0 * std::log(rx(i, i));
  const VectorXd c_beta = fixed.matrixL().solve(b);
  const double pwrss = yty_ - cu_norm - c_beta.squaredNorm();
  if (!(pwrss > 0.0) || !std::isfinite(logdet_z) || !std::isfinite(logdet_x)) return false;

  out->pwrss = pwrss;
  out->deviance = logdet_z + logdet_x +
                  df * (1.0 + std::log(2.0 * std::numbers::pi * pwrss / df));
  out->beta = fixed.matrixU().solve(c_beta);
  out->gamma.resize(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    const VectorXd u = factors[k].matrixU().solve(cu[k] - rzx[k] * out->beta);
    out->gamma[k] = lambda * u;
  }
  return true;
}

double RemlObjective::deviance_at_factor(const MatrixXd& lambda) const {
  Solution s;
  if (!solve_into(lambda, &s) || !std::isfinite(s.deviance)) {
    return std::numeric_limits<double>::infinity();
  }
  return s.deviance;
}

double RemlObjective::deviance(const VectorXd& theta) const {
  return deviance_at_factor(factor(theta));
}

RemlObjective::Solution RemlObjective::solve(const MatrixXd& lambda) const {
  Solution s;
  if (!solve_into(lambda, &s) || !std::isfinite(s.deviance)) {
    throw NumericalFailure("mixed-model system is numerically singular");
  }
  return s;
}

namespace {

// Any square root of a PSD matrix works as the relative factor; the
// formulas only use L L'.
MatrixXd psd_factor(const MatrixXd& relative_cov) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(relative_cov);
  if (eig.info() != Eigen::Success) throw NumericalFailure("eigen decomposition failed");
  VectorXd root = eig.eigenvalues();
  if (root.minCoeff() < -1e-10 * std::max(1.0, root.cwiseAbs().maxCoeff())) {
    throw ValidationError("fixed random-effect covariance must be PSD");
  }
  root = root.cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

}  // namespace

MixedFit fit_reml(const MixedModelSpec& spec, const std::vector<MixedObservation>& obs,
                  const RemlOptions& options) {
  RemlObjective objective(spec, obs, options);
  const auto q = static_cast<Index>(spec.g.dim());

  MixedFit fit;
  fit.spec = spec;
  fit.n = obs.size();

  if (options.fixed_variance) {
    const auto& vc = *options.fixed_variance;
    if (vc.D.rows() != q || vc.D.cols() != q) {
      throw ValidationError("fixed D must be dim(g) x dim(g)");
    }
    if (!(vc.sigma2 > 0.0)) throw ValidationError("fixed sigma2 must be positive");
    const MatrixXd lambda = psd_factor(vc.D / vc.sigma2);
    auto s = objective.solve(lambda);
    fit.beta = std::move(s.beta);
    fit.gamma = std::move(s.gamma);
    fit.vc = vc;
    fit.converged = true;
    fit.reml_deviance = s.deviance;
    return fit;
  }

  const VectorXd start = VectorXd::Zero(static_cast<Index>(objective.parameter_count()));
  const SimplexResult best = nelder_mead(
      [&](const VectorXd& theta) { return objective.deviance(theta); }, start, options.simplex);

  MatrixXd lambda = objective.factor(best.argmin);
  double deviance = best.value;
  // Boundary D = 0 is not reachable on the log scale; take it when it is
  // at least as good as the interior optimum.
  const MatrixXd zero = MatrixXd::Zero(q, q);
  const double at_zero = objective.deviance_at_factor(zero);
  if (at_zero <= deviance + 1e-10) {
    lambda = zero;
    deviance = at_zero;
  }
  if (!std::isfinite(deviance)) throw NumericalFailure("REML deviance is not finite");

  auto s = objective.solve(lambda);
  const double sigma2 = s.pwrss / static_cast<double>(obs.size() - spec.f.dim());
  fit.beta = std::move(s.beta);
  fit.gamma = std::move(s.gamma);
  fit.vc.sigma2 = sigma2;
  fit.vc.D = sigma2 * lambda * lambda.transpose();
  fit.converged = best.converged;
  fit.iterations = best.iterations;
  fit.reml_deviance = s.deviance;
  return fit;
}

double predict_population(const MixedFit& fit, double x) {
  return fit.beta.dot(fit.spec.f.expand(x));
}

double predict_group(const MixedFit& fit, std::size_t k, double x) {
  if (k < 1 || k > fit.gamma.size()) {
    throw std::out_of_range("group " + std::to_string(k) + " was not fitted");
  }
  return predict_population(fit, x) + fit.gamma[k - 1].dot(fit.spec.g.expand(x));
}

}  // namespace deconfound
