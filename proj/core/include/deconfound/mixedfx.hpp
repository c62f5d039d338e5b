#pragma once

// Linear mixed model
//
//   value = f(x)' beta + g(x)' gamma_k + e,   gamma_k ~ N(0, D),  e ~ N(0, sigma2)
//
// fitted by restricted maximum likelihood. The relative covariance
// D / sigma2 = L L' is parameterized by a lower-triangular factor L whose
// diagonal is stored on the log scale (log-Cholesky), so every parameter
// vector maps to a PSD D. sigma2 is profiled out and the profiled REML
// deviance is minimized with Nelder-Mead. beta and the BLUPs gamma_k come
// from the penalized least-squares system at the optimum.

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "deconfound/core_model.hpp"
#include "deconfound/simplex.hpp"

namespace deconfound {

struct MixedObservation {
  double x = 0.0;
  std::size_t group = 1;  // 1..groups
  double value = 0.0;
};

struct MixedModelSpec {
  Basis f = Basis::polynomial(0);  // fixed part
  Basis g = Basis::polynomial(0);  // random part
  std::size_t groups = 1;
};

struct VarianceComponents {
  Eigen::MatrixXd D;  // random-effect covariance, dim(g) x dim(g)
  double sigma2 = 1.0;
};

struct RemlOptions {
  /// Skip optimization and use these variance components as given.
  std::optional<VarianceComponents> fixed_variance;
  SimplexOptions simplex{};
  /// Upper cap on the diagonal of D / sigma2.
  double max_relative_scale = 1e6;
  /// Lower clamp for the log of each factor diagonal entry.
  double min_log_scale = -15.0;
};

struct MixedFit {
  MixedModelSpec spec;
  Eigen::VectorXd beta;
  std::vector<Eigen::VectorXd> gamma;  // gamma[k-1] is the BLUP of group k
  VarianceComponents vc;
  bool converged = false;
  double reml_deviance = 0.0;
  std::size_t iterations = 0;
  std::size_t n = 0;
};

/// Profiled REML deviance as a function of the log-Cholesky parameters.
/// Built once from per-group cross-products; each evaluation costs
/// O(groups * dim(g)^3 + dim(f)^3) regardless of the number of rows.
class RemlObjective {
 public:
  RemlObjective(const MixedModelSpec& spec, const std::vector<MixedObservation>& obs,
                const RemlOptions& options = {});

  std::size_t parameter_count() const noexcept { return q_ * (q_ + 1) / 2; }
  std::size_t n() const noexcept { return n_; }

  /// Relative factor L (D / sigma2 = L L') for a parameter vector after clamping.
  Eigen::MatrixXd factor(const Eigen::VectorXd& theta) const;
  /// Inverse of factor() for a PD relative covariance.
  Eigen::VectorXd parameters_for(const Eigen::MatrixXd& relative_cov) const;

  /// +infinity when the system is numerically singular.
  double deviance(const Eigen::VectorXd& theta) const;
  double deviance_at_factor(const Eigen::MatrixXd& lambda) const;

  struct Solution {
    Eigen::VectorXd beta;
    std::vector<Eigen::VectorXd> gamma;
    double pwrss = 0.0;
    double deviance = 0.0;
  };
  /// Throws NumericalFailure on a singular system.
  Solution solve(const Eigen::MatrixXd& lambda) const;

 private:
  struct GroupStats {
    Eigen::MatrixXd ztz;
    Eigen::MatrixXd ztx;
    Eigen::VectorXd zty;
  };

  bool solve_into(const Eigen::MatrixXd& lambda, Solution* out) const;

  std::size_t p_ = 0;
  std::size_t q_ = 0;
  std::size_t n_ = 0;
  double max_log_scale_ = 0.0;
  double max_offdiag_ = 0.0;
  double min_log_scale_ = 0.0;
  Eigen::MatrixXd xtx_;
  Eigen::VectorXd xty_;
  double yty_ = 0.0;
  std::vector<GroupStats> groups_;
};

/// Throws Underdetermined when the data cannot identify dim(f) + dim(g)
/// parameters, RankDeficient for a collinear fixed design, and
/// NumericalFailure for a non-finite deviance at the optimum.
MixedFit fit_reml(const MixedModelSpec& spec, const std::vector<MixedObservation>& obs,
                  const RemlOptions& options = {});

/// f(x)' beta + g(x)' gamma_k. Throws std::out_of_range for an unknown group.
double predict_group(const MixedFit& fit, std::size_t k, double x);
/// f(x)' beta.
double predict_population(const MixedFit& fit, double x);

}  // namespace deconfound
