#include "deconfound/regress.hpp"

#include <cmath>

#include "deconfound/errors.hpp"

namespace deconfound {

FitResult ols_fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                  std::vector<std::string> column_labels) {
  if (design.rows() != y.size()) {
    throw ValidationError("design rows (" + std::to_string(design.rows()) +
                          ") differ from response length (" + std::to_string(y.size()) + ")");
  }
  if (design.rows() == 0) throw EmptyData("least squares on zero rows");
  const auto columns = static_cast<std::size_t>(design.cols());
  if (!column_labels.empty() && column_labels.size() != columns) {
    throw ValidationError("column label count must match design columns");
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  // Relative threshold on |R_ii| scaled by the largest pivot.
  qr.setThreshold(1e-10);
  const auto rank = static_cast<std::size_t>(qr.rank());
  if (rank < columns) throw RankDeficient(rank, columns);

  FitResult out;
  out.coefs = qr.solve(y);
  out.n = static_cast<std::size_t>(design.rows());
  out.rank = rank;
  out.column_labels = std::move(column_labels);
  const double rss = (y - design * out.coefs).squaredNorm();
  out.residual_variance = out.n > rank ? rss / static_cast<double>(out.n - rank) : 0.0;
  return out;
}

CateModel::CateModel(Basis basis, Eigen::VectorXd baseline, Eigen::VectorXd effect, FitResult fit)
    : basis_(std::move(basis)),
      baseline_(std::move(baseline)),
      effect_(std::move(effect)),
      fit_(std::move(fit)) {
  const auto dim = static_cast<Eigen::Index>(basis_.dim());
  if (effect_.size() != dim || (baseline_.size() != 0 && baseline_.size() != dim)) {
    throw ValidationError("CATE coefficients do not match the basis dimension");
  }
}

CateModel CateModel::from_effect(Basis basis, Eigen::VectorXd effect) {
  return CateModel(std::move(basis), Eigen::VectorXd(), std::move(effect), FitResult{});
}

double CateModel::cate(double x) const { return effect_.dot(basis_.expand(x)); }

double CateModel::arm_mean(double x, int t) const {
  if (baseline_.size() == 0) throw std::logic_error("model carries no baseline coefficients");
  const Eigen::VectorXd fx = basis_.expand(x);
  return baseline_.dot(fx) + (t ? effect_.dot(fx) : 0.0);
}

CateModel fit_cate_regression(const TreatmentSlice& data, const Basis& basis) {
  const std::size_t n = data.x.size();
  if (data.t.size() != n || data.y.size() != n) {
    throw ValidationError("treatment slice columns differ in length");
  }
  std::size_t treated = 0;
  for (auto t : data.t) treated += t;
  const std::size_t control = n - treated;
  if (treated < basis.dim() || control < basis.dim()) {
    throw InsufficientArm("each arm needs at least " + std::to_string(basis.dim()) +
                          " rows (treated " + std::to_string(treated) + ", control " +
                          std::to_string(control) + ")");
  }

  const auto p = static_cast<Eigen::Index>(basis.dim());
  Eigen::MatrixXd design(static_cast<Eigen::Index>(n), 2 * p);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  Eigen::VectorXd fx(p);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    basis.expand_into(data.x[i], fx);
    design.row(row).head(p) = fx.transpose();
    if (data.t[i]) {
      design.row(row).tail(p) = fx.transpose();
    } else {
      design.row(row).tail(p).setZero();
    }
    y[row] = data.y[i];
  }

  std::vector<std::string> labels;
  for (int d : basis.degrees()) labels.push_back("x^" + std::to_string(d));
  for (int d : basis.degrees()) labels.push_back("t*x^" + std::to_string(d));

  FitResult fit = ols_fit(design, y, std::move(labels));
  Eigen::VectorXd baseline = fit.coefs.head(p);
  Eigen::VectorXd effect = fit.coefs.tail(p);
  return CateModel(basis, std::move(baseline), std::move(effect), std::move(fit));
}

}  // namespace deconfound
