#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tiltcrm {

struct Support {
  double lo = 0.0;
  double hi = 1.0;

  double width() const { return hi - lo; }
  bool contains(double y) const { return y >= lo && y <= hi; }
  bool contains_open(double y) const { return y > lo && y < hi; }
};

/// Base distribution G0 on the support. Only the uniform law is provided;
/// density, CDF and quantile are exposed so the quadrature grid and the
/// location sampler never depend on the concrete form.
class BaseMeasure {
 public:
  BaseMeasure() = default;
  explicit BaseMeasure(Support support);

  static BaseMeasure uniform(double lo, double hi) { return BaseMeasure({lo, hi}); }

  const Support& support() const { return support_; }
  double density(double z) const;
  double cdf(double z) const;
  double quantile(double p) const;
  double mean() const { return 0.5 * (support_.lo + support_.hi); }

 private:
  Support support_{};
};

/// Midpoint rule on the support: nodes at cell centres, weights g0(z_j) dz
/// renormalised to one. Shared by the posterior tail-mass quadrature, the
/// atom-location sampler and the u-conditional.
class QuadratureGrid {
 public:
  static constexpr std::size_t kDefaultNodes = 256;

  QuadratureGrid(const BaseMeasure& base, std::size_t nodes = kDefaultNodes);

  std::size_t size() const { return nodes_.size(); }
  std::span<const double> nodes() const { return nodes_; }
  std::span<const double> weights() const { return weights_; }
  double cell_width() const { return cell_width_; }
  double node(std::size_t j) const { return nodes_[j]; }
  double weight(std::size_t j) const { return weights_[j]; }

 private:
  std::vector<double> nodes_;
  std::vector<double> weights_;
  double cell_width_ = 0.0;
};

/// Finite atomic measure with strictly positive weights inside the support.
class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;
  DiscreteMeasure(std::vector<double> locations, std::vector<double> weights,
                  Support bounds);

  std::size_t size() const { return locations_.size(); }
  bool empty() const { return locations_.empty(); }
  std::span<const double> locations() const { return locations_; }
  std::span<const double> weights() const { return weights_; }
  double location(std::size_t i) const { return locations_[i]; }
  double weight(std::size_t i) const { return weights_[i]; }
  const Support& bounds() const { return bounds_; }

  double total_mass() const { return total_mass_; }
  double min_location() const { return min_loc_; }
  double max_location() const { return max_loc_; }

  /// Weights divided by the total mass.
  std::vector<double> normalized_weights() const;
  /// Same atoms, weights rescaled to sum to one.
  DiscreteMeasure normalized() const;

 private:
  std::vector<double> locations_;
  std::vector<double> weights_;
  Support bounds_{};
  double total_mass_ = 0.0;
  double min_loc_ = 0.0;
  double max_loc_ = 0.0;
};

}  // namespace tiltcrm
