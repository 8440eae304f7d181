#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace tiltcrm::tilt {

/// Natural cubic spline basis (truncated-power form) on a single covariate,
/// without the constant column. Boundary knots at the training min/max,
/// df - 1 interior knots at the k/df training quantiles. Columns are
/// centred and scaled with constants frozen from the training data.
class SplineBasis {
 public:
  SplineBasis() = default;
  SplineBasis(std::vector<double> knots, std::vector<double> center, std::vector<double> scale);

  int df() const { return static_cast<int>(center_.size()); }
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& center() const { return center_; }
  const std::vector<double>& scale() const { return scale_; }

  /// Basis row at x (centred and scaled).
  Eigen::RowVectorXd evaluate(double x) const;
  Eigen::MatrixXd evaluate(std::span<const double> x) const;

  /// Raw (uncentred) natural-spline columns.
  Eigen::RowVectorXd raw(double x) const;

 private:
  std::vector<double> knots_;
  std::vector<double> center_;
  std::vector<double> scale_;
};

struct SplineDesign {
  Eigen::MatrixXd design;  // n x df, mean-zero columns
  SplineBasis basis;
};

/// Throws DataError with fewer than df + 2 distinct values.
SplineDesign spline_design(std::span<const double> x, int df = 3);

}  // namespace tiltcrm::tilt
