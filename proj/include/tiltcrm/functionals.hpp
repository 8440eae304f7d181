#pragma once

// Posterior functionals of a fitted chain: convolved baseline density/CDF,
// conditional densities, exceedance probabilities and quantile curves, each
// per draw with pointwise posterior mean and symmetric 95% bands.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tiltcrm/mcmc.hpp"

namespace tiltcrm::functionals {

inline constexpr std::size_t kDefaultGridPoints = 512;
/// Fraction of skipped draws above which a functional carries a warning.
inline constexpr double kSkipWarnFraction = 0.10;

struct Band {
  std::vector<double> mean;
  std::vector<double> lower;  // 2.5%
  std::vector<double> upper;  // 97.5%
};

/// Pointwise mean and 2.5% / 97.5% quantiles over the rows of `values`.
Band summarize_rows(const Eigen::MatrixXd& values);

/// Type-7 sample quantile of an unsorted vector.
double sample_quantile(std::vector<double> v, double p);

struct DensityGrid {
  std::vector<double> y_grid;
  Eigen::MatrixXd values;  // R used draws x grid
  Band summary;
  std::size_t skipped = 0;
  bool skip_warning = false;
};

/// `points` equally spaced values over [lo - c, hi + c], the support of the
/// convolved density.
std::vector<double> default_grid(const mcmc::PosteriorDraws& draws,
                                 std::size_t points = kDefaultGridPoints);

/// Convolved mixture evaluated at one point; weights must be normalized.
double mixture_density(std::span<const double> locations, std::span<const double> weights,
                       double c, double y);
double mixture_cdf(std::span<const double> locations, std::span<const double> weights, double c,
                   double y);
/// Exact inverse of the piecewise-linear mixture CDF (smallest y with F(y) = p).
double mixture_quantile(std::span<const double> locations, std::span<const double> weights,
                        double c, double p);

/// theta_x for draw r, or nullopt when g^{-1}(x'beta_r) is unattainable.
std::optional<double> draw_tilt(const mcmc::PosteriorDraws& draws, std::size_t r,
                                const Eigen::RowVectorXd& x);

DensityGrid baseline_density(const mcmc::PosteriorDraws& draws, std::span<const double> y_grid);
DensityGrid baseline_cdf(const mcmc::PosteriorDraws& draws, std::span<const double> y_grid);
DensityGrid conditional_density(const mcmc::PosteriorDraws& draws, const Eigen::RowVectorXd& x,
                                std::span<const double> y_grid);
DensityGrid conditional_cdf(const mcmc::PosteriorDraws& draws, const Eigen::RowVectorXd& x,
                            std::span<const double> y_grid);

struct Estimate {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::vector<double> per_draw;
  std::size_t skipped = 0;
  bool skip_warning = false;
};

/// P(y > y0 | x) per draw, summarized.
Estimate exceedance(const mcmc::PosteriorDraws& draws, const Eigen::RowVectorXd& x, double y0);

struct QuantileCurve {
  double alpha = 0.5;
  Eigen::MatrixXd values;  // R used draws x number of x rows
  Band summary;
  std::vector<std::size_t> skipped;  // per x row
  bool skip_warning = false;
};

/// q_alpha(x) for each row of `x_rows`. A draw unattainable at some x is
/// skipped for that x only; its cell in `values` is NaN.
QuantileCurve quantile_curve(const mcmc::PosteriorDraws& draws, double alpha,
                             const Eigen::MatrixXd& x_rows);

}  // namespace tiltcrm::functionals
