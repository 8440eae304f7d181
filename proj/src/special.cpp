#include "tiltcrm/special.hpp"

#include <cmath>
#include <limits>

namespace tiltcrm {

namespace {
constexpr double kEulerGamma = 0.57721566490153286060651209;
constexpr double kEps = 1e-16;
constexpr int kMaxTerms = 500;
}  // namespace

double expint_e1(double x) {
  if (!(x > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  if (x <= 1.0) {
    // E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!)
    double sum = 0.0;
    double term = 1.0;
    for (int k = 1; k <= kMaxTerms; ++k) {
      term *= -x / k;
      const double contrib = term / k;
      sum += contrib;
      if (std::fabs(contrib) < kEps * std::fabs(sum) || contrib == 0.0) break;
    }
    return -kEulerGamma - std::log(x) - sum;
  }
  if (x > 745.0) return 0.0;
  // E1(x) = e^{-x} / (x + 1 - 1/(x + 3 - 4/(x + 5 - ...)))
  const double tiny = std::numeric_limits<double>::min() / kEps;
  double b = x + 1.0;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxTerms; ++i) {
    const double a = -static_cast<double>(i) * i;
    b += 2.0;
    d = 1.0 / (a * d + b);
    c = b + a / c;
    const double del = c * d;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h * std::exp(-x);
}

}  // namespace tiltcrm
