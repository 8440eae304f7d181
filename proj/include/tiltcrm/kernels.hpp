#pragma once

// Data-parallel inner loops shared by the sampler and the functional
// extraction. Each kernel exists twice with identical semantics: `serial` is
// the reference implementation, `parallel` distributes the outer index over
// OpenMP threads. Every output element is computed independently (no
// cross-thread reductions), so both versions are bitwise identical.

#include <cstddef>
#include <span>

#include "tiltcrm/measure.hpp"

namespace tiltcrm::kernels {

enum class SolveStatus : unsigned char { ok = 0, out_of_range = 1 };

/// Minimum outer-loop length before `parallel` kernels spawn threads.
inline constexpr std::size_t kParallelThreshold = 64;

namespace serial {

/// out[j] = sum_i u[i] exp(theta[i] points[j])
void psi_at(std::span<const double> u, std::span<const double> theta,
            std::span<const double> points, std::span<double> out);

/// out[i * points.size() + j] = exp(theta[i] points[j])
void tilt_exponentials(std::span<const double> theta, std::span<const double> points,
                       std::span<double> out);

/// theta[i] = b'^{-1}(lambda[i]; mu), warm-started at guess[i].
void solve_theta_batch(const DiscreteMeasure& mu, std::span<const double> lambda,
                       std::span<const double> guess, std::span<double> theta,
                       std::span<SolveStatus> status);

/// out[i] = b(theta[i], mu)
void log_norm_batch(const DiscreteMeasure& mu, std::span<const double> theta,
                    std::span<double> out);

/// Row r: uniform-kernel mixture density of measures[r] tilted by tilts[r].
void mixture_density_rows(std::span<const DiscreteMeasure> measures,
                          std::span<const double> tilts, double halfwidth,
                          std::span<const double> grid, std::span<double> out);

/// Row r: the matching mixture CDF.
void mixture_cdf_rows(std::span<const DiscreteMeasure> measures, std::span<const double> tilts,
                      double halfwidth, std::span<const double> grid, std::span<double> out);

}  // namespace serial

namespace parallel {

void psi_at(std::span<const double> u, std::span<const double> theta,
            std::span<const double> points, std::span<double> out);
void tilt_exponentials(std::span<const double> theta, std::span<const double> points,
                       std::span<double> out);
void solve_theta_batch(const DiscreteMeasure& mu, std::span<const double> lambda,
                       std::span<const double> guess, std::span<double> theta,
                       std::span<SolveStatus> status);
void log_norm_batch(const DiscreteMeasure& mu, std::span<const double> theta,
                    std::span<double> out);
void mixture_density_rows(std::span<const DiscreteMeasure> measures,
                          std::span<const double> tilts, double halfwidth,
                          std::span<const double> grid, std::span<double> out);
void mixture_cdf_rows(std::span<const DiscreteMeasure> measures, std::span<const double> tilts,
                      double halfwidth, std::span<const double> grid, std::span<double> out);

}  // namespace parallel

}  // namespace tiltcrm::kernels
