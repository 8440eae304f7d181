#pragma once

// Exponential tilting of a discrete measure: log-normalizer b(theta, mu), its
// derivatives, the inverse mean map theta = b'^{-1}(lambda; mu), the link and
// the identifiability retilting.

#include <optional>
#include <vector>

#include "tiltcrm/measure.hpp"

namespace tiltcrm::tilt {

struct SolveOptions {
  /// Convergence on the mean, relative to the support width.
  double tol_mean_rel = 1e-10;
  int max_newton = 100;
  int max_bisect = 200;
  /// |theta| beyond this is treated as unattainable.
  double theta_cap = 500.0;
};

/// b(theta, mu) = log sum_l w_l exp(theta z_l), max-shifted.
double log_norm_const(const DiscreteMeasure& mu, double theta);

struct Moments {
  double log_norm;
  double mean;
  double var;
};

/// b, b' and b'' in one pass.
Moments tilted_moments(const DiscreteMeasure& mu, double theta);

inline double tilted_mean(const DiscreteMeasure& mu, double theta) {
  return tilted_moments(mu, theta).mean;
}
inline double tilted_var(const DiscreteMeasure& mu, double theta) {
  return tilted_moments(mu, theta).var;
}

/// Safeguarded Newton (bisection fallback) from `guess`; nullopt when lambda
/// is outside the open hull of the atoms or needs |theta| > theta_cap.
std::optional<double> try_solve_theta(const DiscreteMeasure& mu, double lambda,
                                      double guess = 0.0, const SolveOptions& opts = {});

/// Throws MeanOutOfRange where try_solve_theta returns nullopt.
double solve_theta(const DiscreteMeasure& mu, double lambda, const SolveOptions& opts = {});

/// mu' = mu * exp(c z).
DiscreteMeasure retilt(const DiscreteMeasure& mu, double c);

/// mu * exp(c z) with c = solve_theta(mu, m0), so the normalized mean is m0.
DiscreteMeasure retilt_to_mean(const DiscreteMeasure& mu, double m0,
                               const SolveOptions& opts = {});

/// The tilted, normalized law G_x = exp(theta z - b(theta)) mu.
class TiltedView {
 public:
  TiltedView(const DiscreteMeasure& base, double theta);

  const DiscreteMeasure& base() const { return *base_; }
  double theta() const { return theta_; }
  double log_norm() const { return log_norm_; }
  /// w_l = exp(theta z_l - b(theta)) s_l.
  std::vector<double> weights() const;

 private:
  const DiscreteMeasure* base_;
  double theta_;
  double log_norm_;
};

/// Logit link mapped onto the support: lambda = lo + (hi - lo) / (1 + e^{-eta}).
class LinkSpec {
 public:
  LinkSpec() = default;
  explicit LinkSpec(Support support) : support_(support) {}

  static LinkSpec logit(Support support = {}) { return LinkSpec(support); }

  /// g(lambda)
  double link(double lambda) const;
  /// g^{-1}(eta)
  double inverse(double eta) const;
  /// g'(lambda)
  double derivative(double lambda) const;
  const Support& support() const { return support_; }

 private:
  Support support_{};
};

}  // namespace tiltcrm::tilt
