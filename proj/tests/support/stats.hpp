#pragma once

// Small statistical helpers for the test suites: Kolmogorov-Smirnov tests,
// chi-square p-values and Monte-Carlo summaries.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

namespace teststats {

struct KsResult {
  double d;
  double p;
};

// Asymptotic Kolmogorov survival function Q(x) = 2 sum (-1)^{k-1} exp(-2 k^2 x^2).
inline double kolmogorov_q(double x) {
  if (x < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

// Stephens' finite-sample correction of the statistic.
inline double ks_p(double d, double n_eff) {
  const double r = std::sqrt(n_eff);
  return kolmogorov_q((r + 0.12 + 0.11 / r) * d);
}

inline KsResult ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = double(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double F = cdf(x[i]);
    d = std::max({d, double(i + 1) / n - F, F - double(i) / n});
  }
  return {d, ks_p(d, n)};
}

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::fabs(double(i) / a.size() - double(j) / b.size()));
  }
  const double n = double(a.size()), m = double(b.size());
  return {d, ks_p(d, n * m / (n + m))};
}

// Pearson chi-square against expected counts.
inline double chi2_p(const std::vector<double>& observed, const std::vector<double>& expected,
                     int constraints = 1) {
  double stat = 0.0;
  for (std::size_t k = 0; k < observed.size(); ++k)
    stat += (observed[k] - expected[k]) * (observed[k] - expected[k]) / expected[k];
  const boost::math::chi_squared dist(double(observed.size()) - constraints);
  return boost::math::cdf(boost::math::complement(dist, stat));
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

inline double sd(const std::vector<double>& v) {
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / double(v.size() - 1));
}

inline double se(const std::vector<double>& v) { return sd(v) / std::sqrt(double(v.size())); }

// Standard error of a mean of autocorrelated draws by non-overlapping batch means.
inline double batch_se(const std::vector<double>& v, std::size_t batches = 25) {
  const std::size_t len = v.size() / batches;
  std::vector<double> means;
  for (std::size_t b = 0; b < batches; ++b)
    means.push_back(std::accumulate(v.begin() + b * len, v.begin() + (b + 1) * len, 0.0) /
                    double(len));
  return se(means);
}

}  // namespace teststats
