#pragma once

namespace tiltcrm {

/// Exponential integral E1(x) = \int_x^\infty e^{-t}/t dt for x > 0.
/// Power series below x = 1, modified-Lentz continued fraction above.
double expint_e1(double x);

}  // namespace tiltcrm
