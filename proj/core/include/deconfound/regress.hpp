#pragma once

// Rank-safe ordinary least squares on basis-expanded designs.

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "deconfound/core_model.hpp"

namespace deconfound {

struct FitResult {
  Eigen::VectorXd coefs;
  double residual_variance = 0.0;  // RSS / (n - rank), or 0 when n == rank
  std::size_t n = 0;
  std::size_t rank = 0;
  std::vector<std::string> column_labels;
};

/// Least squares by column-pivoted Householder QR.
/// Throws EmptyData for zero rows and RankDeficient when the design does
/// not have full column rank.
FitResult ols_fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                  std::vector<std::string> column_labels = {});

/// Fitted regression y ~ [f(x), t f(x)]. The treatment-interaction part is
/// the CATE estimate; on confounded data it is the biased omega-hat.
class CateModel {
 public:
  CateModel(Basis basis, Eigen::VectorXd baseline, Eigen::VectorXd effect, FitResult fit);

  /// Only the CATE coefficient path: effect . f(x).
  static CateModel from_effect(Basis basis, Eigen::VectorXd effect);

  const Basis& basis() const noexcept { return basis_; }
  const Eigen::VectorXd& baseline_coefs() const noexcept { return baseline_; }
  const Eigen::VectorXd& effect_coefs() const noexcept { return effect_; }
  const FitResult& fit() const noexcept { return fit_; }

  double cate(double x) const;
  /// Arm mean E[Y | t, x] under the fitted model.
  double arm_mean(double x, int t) const;

 private:
  Basis basis_;
  Eigen::VectorXd baseline_;
  Eigen::VectorXd effect_;
  FitResult fit_;
};

/// Fits y ~ [f(x), t f(x)]. Each arm must contain at least dim(basis) rows
/// (InsufficientArm otherwise).
CateModel fit_cate_regression(const TreatmentSlice& data, const Basis& basis);

}  // namespace deconfound
