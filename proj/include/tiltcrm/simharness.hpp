#pragma once

// Desk-scale operating-characteristic study: scenario generators, the
// replicate loop and the distance / coverage metrics.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tiltcrm/dataset.hpp"
#include "tiltcrm/mcmc.hpp"
#include "tiltcrm/rng.hpp"

namespace tiltcrm::sim {

inline constexpr std::size_t kTruthGridPoints = 2048;

/// Density tabulated at the midpoints of equal cells on (0, 1); treated as
/// piecewise constant for sampling and tilting.
class GriddedLaw {
 public:
  GriddedLaw() = default;
  /// `density` is evaluated at the midpoints and renormalized.
  template <class F>
  static GriddedLaw from_density(F density, std::size_t points = kTruthGridPoints) {
    std::vector<double> mid(points), f(points);
    for (std::size_t k = 0; k < points; ++k) {
      mid[k] = (double(k) + 0.5) / double(points);
      f[k] = density(mid[k]);
    }
    return GriddedLaw(std::move(mid), std::move(f));
  }
  GriddedLaw(std::vector<double> midpoints, std::vector<double> density);

  std::size_t size() const { return mid_.size(); }
  double cell() const { return h_; }
  std::span<const double> midpoints() const { return mid_; }
  std::span<const double> density() const { return f_; }
  double mean() const;

  /// Cell masses as an atomic measure at the midpoints.
  const DiscreteMeasure& as_measure() const { return measure_; }
  /// Same law tilted by e^{theta y}, renormalized.
  GriddedLaw tilted(double theta) const;

  /// CDF of the piecewise-constant density (linear within cells).
  double cdf(double y) const;
  double quantile(double p) const;
  double sample(Rng& rng) const;

 private:
  std::vector<double> mid_;
  std::vector<double> f_;
  std::vector<double> cum_;  // cum_[k] = F at the right edge of cell k
  DiscreteMeasure measure_;
  double h_ = 0.0;
};

/// 0.7 Beta(8, 3) + 0.3 Beta(3, 8): stand-in for the unavailable empirical baseline.
double substitute_baseline_density(double y);
const GriddedLaw& substitute_baseline();

enum class ScenarioKind { null_case, regression };

struct Scenario {
  ScenarioKind kind = ScenarioKind::regression;
  Eigen::Vector2d beta_true{0.2, 0.7};
  std::size_t n = 250;
  int replicates = 50;

  static Scenario null_case(std::size_t n, int replicates);
  static Scenario regression(std::size_t n, int replicates);
  std::string name() const;
};

/// x_i ~ U(-sqrt(12)/4, sqrt(12)/4), design rows (1, x_i), y_i from the tilted baseline.
Dataset generate_replicate(const Scenario& scenario, Rng& rng,
                           const GriddedLaw& baseline = substitute_baseline());

/// The true conditional law of y given covariate value x.
GriddedLaw true_conditional(const Scenario& scenario, double x,
                            const GriddedLaw& baseline = substitute_baseline());

/// sup |F_hat - F| over the shared grid.
double ks_stat(std::span<const double> F_hat, std::span<const double> F_true);
/// 1/2 int |f_hat - f| by the trapezoid rule on the grid.
double tv_dist(std::span<const double> f_hat, std::span<const double> f_true,
               std::span<const double> grid);
/// int_0^1 |F_hat^{-1}(p) - F^{-1}(p)| dp; the inverses interpolate the
/// tabulated CDFs linearly, the p-integral is a midpoint rule with `levels` cells.
double wasserstein1(std::span<const double> F_hat, std::span<const double> F_true,
                    std::span<const double> grid, std::size_t levels = kTruthGridPoints);
/// Trapezoid integral of m * f_true over the grid.
double weighted_summary(std::span<const double> m, std::span<const double> f_true,
                        std::span<const double> grid);

/// Inverse of a tabulated nondecreasing CDF by linear interpolation.
double grid_quantile(std::span<const double> F, std::span<const double> grid, double p);

struct ReplicateMetrics {
  int index = 0;
  bool ok = false;
  std::string error;
  double ks = 0.0, tv = 0.0, w1 = 0.0;
  double weighted_bias = 0.0;
  double weighted_coverage = 0.0;
  double weighted_ci_length = 0.0;
  double u_accept = 0.0, mu_accept = 0.0, beta_accept = 0.0;
};

/// One row of a bias / RMSE / coverage / CI-length table. Coverage in percent.
struct SummaryRow {
  std::string label;
  double bias = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;
  double coverage_se = 0.0;
  double ci_length = 0.0;
};

struct ExceedanceRow {
  double x = 0.0;
  double level = 0.0;  // quantile of the true conditional law
  double y0 = 0.0;
  double truth = 0.0;  // P(y > y0 | x) = 1 - level
  SummaryRow stats;
};

struct MetricsReport {
  Scenario scenario;
  std::vector<ReplicateMetrics> replicates;
  int failures = 0;
  bool failed = false;
  /// Weighted-mean summaries of F_mu (bias, RMSE, coverage, CI length).
  SummaryRow baseline;
  /// Pointwise versions on the truth grid.
  std::vector<double> grid, bias, rmse, coverage, ci_length;
  std::vector<ExceedanceRow> exceedance;
  std::vector<SummaryRow> beta;
  double median_ks = 0.0, median_tv = 0.0, median_w1 = 0.0;
};

inline const std::vector<double>& exceedance_x_values() {
  static const std::vector<double> v{0.0, 0.25, 0.5};
  return v;
}
inline const std::vector<double>& exceedance_levels() {
  static const std::vector<double> v{0.10, 0.25, 0.50, 0.75, 0.90};
  return v;
}

/// Fit every replicate (OpenMP across replicates, stream = replicate index),
/// retilting draws to the true baseline mean. More than 5% failed replicates
/// marks the study failed.
MetricsReport run_study(const Scenario& scenario, const mcmc::McmcConfig& fit,
                        std::uint64_t master_seed,
                        const GriddedLaw& baseline = substitute_baseline());

}  // namespace tiltcrm::sim
