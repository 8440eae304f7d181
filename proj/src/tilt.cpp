#include "tiltcrm/tilt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "tiltcrm/errors.hpp"

namespace tiltcrm::tilt {

namespace {

double shift_point(const DiscreteMeasure& mu, double theta) {
  return theta > 0.0 ? mu.max_location() : mu.min_location();
}

}  // namespace

double log_norm_const(const DiscreteMeasure& mu, double theta) {
  if (mu.empty()) throw NumericalError("log_norm_const: empty measure");
  const double zr = shift_point(mu, theta);
  const auto z = mu.locations();
  const auto w = mu.weights();
  double s0 = 0.0;
  for (std::size_t l = 0; l < z.size(); ++l) s0 += w[l] * std::exp(theta * (z[l] - zr));
  return theta * zr + std::log(s0);
}

Moments tilted_moments(const DiscreteMeasure& mu, double theta) {
  if (mu.empty()) throw NumericalError("tilted_moments: empty measure");
  const double zr = shift_point(mu, theta);
  const auto z = mu.locations();
  const auto w = mu.weights();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  for (std::size_t l = 0; l < z.size(); ++l) {
    const double d = z[l] - zr;
    const double e = w[l] * std::exp(theta * d);
    s0 += e;
    s1 += e * d;
    s2 += e * d * d;
  }
  const double m = s1 / s0;
  const double v = std::max(s2 / s0 - m * m, 0.0);
  return {theta * zr + std::log(s0), zr + m, v};
}

std::optional<double> try_solve_theta(const DiscreteMeasure& mu, double lambda, double guess,
                                      const SolveOptions& opts) {
  if (mu.empty() || !(lambda > mu.min_location() && lambda < mu.max_location()))
    return std::nullopt;
  const double tol = opts.tol_mean_rel * mu.bounds().width();
  const double cap = opts.theta_cap;

  double lo = -cap, hi = cap;
  bool have_lo = false, have_hi = false;
  double theta = std::isfinite(guess) ? std::clamp(guess, -cap, cap) : 0.0;
  double expand = 1.0;
  double prev_abs_f = std::numeric_limits<double>::infinity();

  const int budget = opts.max_newton + opts.max_bisect;
  for (int it = 0; it < budget; ++it) {
    const Moments m = tilted_moments(mu, theta);
    const double f = m.mean - lambda;
    if (std::fabs(f) <= tol) return theta;
    if (f < 0.0) {
      lo = theta;
      have_lo = true;
      if (theta >= cap) return std::nullopt;
    } else {
      hi = theta;
      have_hi = true;
      if (theta <= -cap) return std::nullopt;
    }

    double next = m.var > 0.0 ? theta - f / m.var : std::numeric_limits<double>::quiet_NaN();
    const bool bracketed = have_lo && have_hi;
    const bool newton_ok = std::isfinite(next) && next > lo && next < hi &&
                           (!bracketed || std::fabs(f) < 0.5 * prev_abs_f);
    if (!newton_ok) {
      if (bracketed) {
        next = 0.5 * (lo + hi);
      } else if (!have_hi) {
        next = std::min(theta + expand, cap);
        expand *= 2.0;
      } else {
        next = std::max(theta - expand, -cap);
        expand *= 2.0;
      }
    }
    if (bracketed && hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() *
                                     std::max(1.0, std::fabs(theta)))
      return theta;
    prev_abs_f = std::fabs(f);
    theta = next;
  }
  return std::nullopt;
}

double solve_theta(const DiscreteMeasure& mu, double lambda, const SolveOptions& opts) {
  if (auto t = try_solve_theta(mu, lambda, 0.0, opts)) return *t;
  std::ostringstream os;
  os << "mean " << lambda << " unattainable: atom hull is (" << mu.min_location() << ", "
     << mu.max_location() << ")";
  throw MeanOutOfRange(os.str());
}

DiscreteMeasure retilt(const DiscreteMeasure& mu, double c) {
  std::vector<double> loc(mu.locations().begin(), mu.locations().end());
  std::vector<double> w(mu.size());
  for (std::size_t l = 0; l < w.size(); ++l) {
    w[l] = mu.weight(l) * std::exp(c * loc[l]);
    if (!(w[l] > 0.0) || !std::isfinite(w[l]))
      throw NumericalError("retilt: weight over/underflow");
  }
  return DiscreteMeasure(std::move(loc), std::move(w), mu.bounds());
}

DiscreteMeasure retilt_to_mean(const DiscreteMeasure& mu, double m0, const SolveOptions& opts) {
  return retilt(mu, solve_theta(mu, m0, opts));
}

TiltedView::TiltedView(const DiscreteMeasure& base, double theta)
    : base_(&base), theta_(theta), log_norm_(log_norm_const(base, theta)) {}

std::vector<double> TiltedView::weights() const {
  std::vector<double> w(base_->size());
  for (std::size_t l = 0; l < w.size(); ++l)
    w[l] = std::exp(theta_ * base_->location(l) - log_norm_) * base_->weight(l);
  return w;
}

double LinkSpec::link(double lambda) const {
  return std::log((lambda - support_.lo) / (support_.hi - lambda));
}

double LinkSpec::inverse(double eta) const {
  const double p = eta >= 0.0 ? 1.0 / (1.0 + std::exp(-eta))
                              : std::exp(eta) / (1.0 + std::exp(eta));
  return support_.lo + support_.width() * p;
}

double LinkSpec::derivative(double lambda) const {
  return support_.width() / ((lambda - support_.lo) * (support_.hi - lambda));
}

}  // namespace tiltcrm::tilt
