#include "tiltcrm/spline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tiltcrm/errors.hpp"

namespace tiltcrm::tilt {

namespace {

double cube_plus(double v) { return v > 0.0 ? v * v * v : 0.0; }

// Linear-interpolation sample quantile of sorted data.
double sorted_quantile(const std::vector<double>& s, double p) {
  const double h = p * static_cast<double>(s.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(h));
  if (i + 1 >= s.size()) return s.back();
  return s[i] + (h - static_cast<double>(i)) * (s[i + 1] - s[i]);
}

}  // namespace

SplineBasis::SplineBasis(std::vector<double> knots, std::vector<double> center,
                         std::vector<double> scale)
    : knots_(std::move(knots)), center_(std::move(center)), scale_(std::move(scale)) {
  if (knots_.size() < 2 || center_.size() != knots_.size() - 1 || scale_.size() != center_.size())
    throw ConfigError("spline basis: inconsistent knots / centring constants");
}

Eigen::RowVectorXd SplineBasis::raw(double x) const {
  // Work on the unit interval spanned by the boundary knots.
  const double a = knots_.front();
  const double width = knots_.back() - a;
  const double t = (x - a) / width;
  const std::size_t K = knots_.size();
  std::vector<double> xi(K);
  for (std::size_t k = 0; k < K; ++k) xi[k] = (knots_[k] - a) / width;

  auto d = [&](std::size_t k) {
    return (cube_plus(t - xi[k]) - cube_plus(t - xi[K - 1])) / (xi[K - 1] - xi[k]);
  };
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(K - 1));
  row(0) = t;
  const double last = d(K - 2);
  for (std::size_t k = 0; k + 2 < K; ++k) row(static_cast<Eigen::Index>(k + 1)) = d(k) - last;
  return row;
}

Eigen::RowVectorXd SplineBasis::evaluate(double x) const {
  Eigen::RowVectorXd row = raw(x);
  for (Eigen::Index j = 0; j < row.size(); ++j)
    row(j) = (row(j) - center_[static_cast<std::size_t>(j)]) / scale_[static_cast<std::size_t>(j)];
  return row;
}

Eigen::MatrixXd SplineBasis::evaluate(std::span<const double> x) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(x.size()), df());
  for (std::size_t i = 0; i < x.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = evaluate(x[i]);
  return out;
}

SplineDesign spline_design(std::span<const double> x, int df) {
  if (df < 1) throw ConfigError("spline df must be positive");
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const auto distinct = static_cast<int>(
      std::unique(sorted.begin(), sorted.end()) - sorted.begin());
  if (distinct < df + 2) {
    std::ostringstream os;
    os << "spline design needs at least " << df + 2 << " distinct covariate values, got "
       << distinct;
    throw DataError(os.str());
  }
  sorted.assign(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());

  std::vector<double> knots;
  knots.push_back(sorted.front());
  for (int k = 1; k < df; ++k) knots.push_back(sorted_quantile(sorted, double(k) / df));
  knots.push_back(sorted.back());

  const std::size_t n = x.size();
  SplineBasis unscaled(knots, std::vector<double>(df, 0.0), std::vector<double>(df, 1.0));
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(n), df);
  for (std::size_t i = 0; i < n; ++i) raw.row(static_cast<Eigen::Index>(i)) = unscaled.raw(x[i]);

  std::vector<double> center(df), scale(df);
  for (int j = 0; j < df; ++j) {
    const double m = raw.col(j).mean();
    const double sd = std::sqrt((raw.col(j).array() - m).square().sum() / double(n));
    center[j] = m;
    scale[j] = sd > 0.0 ? sd : 1.0;
  }
  SplineBasis basis(std::move(knots), std::move(center), std::move(scale));
  return {basis.evaluate(x), basis};
}

}  // namespace tiltcrm::tilt
