#include "tiltcrm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "tiltcrm/errors.hpp"
#include "tiltcrm/tilt.hpp"

namespace tiltcrm::kernels {

namespace {

inline double psi_one(std::span<const double> u, std::span<const double> theta, double z) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * std::exp(theta[i] * z);
  return s;
}

inline void exp_row(double theta, std::span<const double> points, double* out) {
  for (std::size_t j = 0; j < points.size(); ++j) out[j] = std::exp(theta * points[j]);
}

inline void solve_one(const DiscreteMeasure& mu, double lambda, double guess, double& theta,
                      SolveStatus& status) {
  if (auto t = tilt::try_solve_theta(mu, lambda, guess)) {
    theta = *t;
    status = SolveStatus::ok;
  } else {
    theta = guess;
    status = SolveStatus::out_of_range;
  }
}

// Normalized weights of mu tilted by theta, written into w.
void tilted_weights(const DiscreteMeasure& mu, double theta, std::vector<double>& w) {
  const double b = tilt::log_norm_const(mu, theta);
  w.resize(mu.size());
  for (std::size_t l = 0; l < mu.size(); ++l)
    w[l] = mu.weight(l) * std::exp(theta * mu.location(l) - b);
}

void density_row(const DiscreteMeasure& mu, double theta, double c, std::span<const double> grid,
                 double* out) {
  std::vector<double> w;
  tilted_weights(mu, theta, w);
  const double height = 1.0 / (2.0 * c);
  std::fill(out, out + grid.size(), 0.0);
  for (std::size_t l = 0; l < mu.size(); ++l) {
    const double a = mu.location(l) - c, b = mu.location(l) + c;
    const auto first = std::lower_bound(grid.begin(), grid.end(), a) - grid.begin();
    const auto last = std::upper_bound(grid.begin(), grid.end(), b) - grid.begin();
    for (auto g = first; g < last; ++g) out[g] += w[l] * height;
  }
}

void cdf_row(const DiscreteMeasure& mu, double theta, double c, std::span<const double> grid,
             double* out) {
  std::vector<double> w;
  tilted_weights(mu, theta, w);
  std::fill(out, out + grid.size(), 0.0);
  for (std::size_t l = 0; l < mu.size(); ++l) {
    const double a = mu.location(l) - c;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double r = (grid[g] - a) / (2.0 * c);
      out[g] += w[l] * std::clamp(r, 0.0, 1.0);
    }
  }
  for (std::size_t g = 0; g < grid.size(); ++g) out[g] = std::min(out[g], 1.0);
}

void check_rows(std::span<const DiscreteMeasure> measures, std::span<const double> tilts,
                std::span<const double> grid, std::span<double> out) {
  if (tilts.size() != measures.size() || out.size() != measures.size() * grid.size())
    throw NumericalError("mixture kernel: output shape mismatch");
}

}  // namespace

namespace serial {

void psi_at(std::span<const double> u, std::span<const double> theta,
            std::span<const double> points, std::span<double> out) {
  for (std::size_t j = 0; j < points.size(); ++j) out[j] = psi_one(u, theta, points[j]);
}

void tilt_exponentials(std::span<const double> theta, std::span<const double> points,
                       std::span<double> out) {
  for (std::size_t i = 0; i < theta.size(); ++i)
    exp_row(theta[i], points, out.data() + i * points.size());
}

void solve_theta_batch(const DiscreteMeasure& mu, std::span<const double> lambda,
                       std::span<const double> guess, std::span<double> theta,
                       std::span<SolveStatus> status) {
  for (std::size_t i = 0; i < lambda.size(); ++i)
    solve_one(mu, lambda[i], guess[i], theta[i], status[i]);
}

void log_norm_batch(const DiscreteMeasure& mu, std::span<const double> theta,
                    std::span<double> out) {
  for (std::size_t i = 0; i < theta.size(); ++i) out[i] = tilt::log_norm_const(mu, theta[i]);
}

void mixture_density_rows(std::span<const DiscreteMeasure> measures,
                          std::span<const double> tilts, double halfwidth,
                          std::span<const double> grid, std::span<double> out) {
  check_rows(measures, tilts, grid, out);
  for (std::size_t r = 0; r < measures.size(); ++r)
    density_row(measures[r], tilts[r], halfwidth, grid, out.data() + r * grid.size());
}

void mixture_cdf_rows(std::span<const DiscreteMeasure> measures, std::span<const double> tilts,
                      double halfwidth, std::span<const double> grid, std::span<double> out) {
  check_rows(measures, tilts, grid, out);
  for (std::size_t r = 0; r < measures.size(); ++r)
    cdf_row(measures[r], tilts[r], halfwidth, grid, out.data() + r * grid.size());
}

}  // namespace serial

namespace parallel {

void psi_at(std::span<const double> u, std::span<const double> theta,
            std::span<const double> points, std::span<double> out) {
  const auto m = static_cast<std::int64_t>(points.size());
#pragma omp parallel for schedule(static) if (points.size() * u.size() >= 64 * kParallelThreshold)
  for (std::int64_t j = 0; j < m; ++j) out[j] = psi_one(u, theta, points[j]);
}

void tilt_exponentials(std::span<const double> theta, std::span<const double> points,
                       std::span<double> out) {
  const auto n = static_cast<std::int64_t>(theta.size());
#pragma omp parallel for schedule(static) if (theta.size() >= kParallelThreshold)
  for (std::int64_t i = 0; i < n; ++i) exp_row(theta[i], points, out.data() + i * points.size());
}

void solve_theta_batch(const DiscreteMeasure& mu, std::span<const double> lambda,
                       std::span<const double> guess, std::span<double> theta,
                       std::span<SolveStatus> status) {
  const auto n = static_cast<std::int64_t>(lambda.size());
#pragma omp parallel for schedule(static) if (lambda.size() >= kParallelThreshold)
  for (std::int64_t i = 0; i < n; ++i) solve_one(mu, lambda[i], guess[i], theta[i], status[i]);
}

void log_norm_batch(const DiscreteMeasure& mu, std::span<const double> theta,
                    std::span<double> out) {
  const auto n = static_cast<std::int64_t>(theta.size());
#pragma omp parallel for schedule(static) if (theta.size() >= kParallelThreshold)
  for (std::int64_t i = 0; i < n; ++i) out[i] = tilt::log_norm_const(mu, theta[i]);
}

void mixture_density_rows(std::span<const DiscreteMeasure> measures,
                          std::span<const double> tilts, double halfwidth,
                          std::span<const double> grid, std::span<double> out) {
  check_rows(measures, tilts, grid, out);
  const auto rows = static_cast<std::int64_t>(measures.size());
#pragma omp parallel for schedule(dynamic, 4) if (measures.size() >= 8)
  for (std::int64_t r = 0; r < rows; ++r)
    density_row(measures[r], tilts[r], halfwidth, grid, out.data() + r * grid.size());
}

void mixture_cdf_rows(std::span<const DiscreteMeasure> measures, std::span<const double> tilts,
                      double halfwidth, std::span<const double> grid, std::span<double> out) {
  check_rows(measures, tilts, grid, out);
  const auto rows = static_cast<std::int64_t>(measures.size());
#pragma omp parallel for schedule(dynamic, 4) if (measures.size() >= 8)
  for (std::int64_t r = 0; r < rows; ++r)
    cdf_row(measures[r], tilts[r], halfwidth, grid, out.data() + r * grid.size());
}

}  // namespace parallel

}  // namespace tiltcrm::kernels
