#include "tiltcrm/measure.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tiltcrm/errors.hpp"

namespace tiltcrm {

BaseMeasure::BaseMeasure(Support support) : support_(support) {
  if (!(support.hi > support.lo) || !std::isfinite(support.lo) || !std::isfinite(support.hi))
    throw ConfigError("base measure support must satisfy lo < hi");
}

double BaseMeasure::density(double z) const {
  return support_.contains(z) ? 1.0 / support_.width() : 0.0;
}

double BaseMeasure::cdf(double z) const {
  return std::clamp((z - support_.lo) / support_.width(), 0.0, 1.0);
}

double BaseMeasure::quantile(double p) const {
  return support_.lo + std::clamp(p, 0.0, 1.0) * support_.width();
}

QuadratureGrid::QuadratureGrid(const BaseMeasure& base, std::size_t nodes) {
  if (nodes == 0) throw ConfigError("quadrature grid needs at least one node");
  const Support& s = base.support();
  cell_width_ = s.width() / static_cast<double>(nodes);
  nodes_.resize(nodes);
  weights_.resize(nodes);
  double total = 0.0;
  for (std::size_t j = 0; j < nodes; ++j) {
    nodes_[j] = s.lo + (static_cast<double>(j) + 0.5) * cell_width_;
    weights_[j] = base.density(nodes_[j]) * cell_width_;
    total += weights_[j];
  }
  for (double& w : weights_) w /= total;
}

DiscreteMeasure::DiscreteMeasure(std::vector<double> locations, std::vector<double> weights,
                                 Support bounds)
    : locations_(std::move(locations)), weights_(std::move(weights)), bounds_(bounds) {
  if (locations_.size() != weights_.size())
    throw NumericalError("discrete measure: locations and weights differ in length");
  if (locations_.empty()) throw NumericalError("discrete measure: no atoms");
  double total = 0.0;
  min_loc_ = locations_.front();
  max_loc_ = locations_.front();
  for (std::size_t i = 0; i < locations_.size(); ++i) {
    const double z = locations_[i];
    const double w = weights_[i];
    if (!(w > 0.0) || !std::isfinite(w)) {
      std::ostringstream os;
      os << "discrete measure: atom " << i << " has non-positive weight " << w;
      throw NumericalError(os.str());
    }
    if (!bounds_.contains(z)) {
      std::ostringstream os;
      os << "discrete measure: atom " << i << " location " << z << " outside support";
      throw NumericalError(os.str());
    }
    total += w;
    min_loc_ = std::min(min_loc_, z);
    max_loc_ = std::max(max_loc_, z);
  }
  if (!std::isfinite(total)) throw NumericalError("discrete measure: total mass not finite");
  total_mass_ = total;
}

std::vector<double> DiscreteMeasure::normalized_weights() const {
  std::vector<double> w(weights_);
  for (double& v : w) v /= total_mass_;
  return w;
}

DiscreteMeasure DiscreteMeasure::normalized() const {
  return DiscreteMeasure(locations_, normalized_weights(), bounds_);
}

}  // namespace tiltcrm
