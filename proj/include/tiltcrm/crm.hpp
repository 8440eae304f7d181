#pragma once

// Gamma and posterior (inhomogeneous, exponentially tilted) completely random
// measures, realised as truncated atomic measures by Ferguson-Klass inversion.

#include <cstddef>
#include <span>
#include <vector>

#include "tiltcrm/measure.hpp"
#include "tiltcrm/rng.hpp"

namespace tiltcrm::crm {

struct InversionOptions {
  double tol_rel = 1e-9;
  int max_iterations = 200;
};

/// psi(z) = sum_i u_i exp(theta_i z).
struct TiltSum {
  std::vector<double> u;
  std::vector<double> theta;

  double operator()(double z) const;
  bool empty() const { return u.empty(); }
};

/// Levy intensity nu(ds, dz) = s^{-1} exp(-s (1 + psi(z))) ds alpha G0(dz).
/// HomogeneousGamma is the psi == 0 case, handled in closed form.
class LevyIntensity {
 public:
  enum class Kind { HomogeneousGamma, PosteriorTilted };

  static LevyIntensity gamma(double alpha, const BaseMeasure& base,
                             std::size_t nodes = QuadratureGrid::kDefaultNodes);
  static LevyIntensity posterior_tilted(double alpha, const BaseMeasure& base, TiltSum psi,
                                        std::size_t nodes = QuadratureGrid::kDefaultNodes);
  /// Posterior form from psi already evaluated on the quadrature nodes.
  static LevyIntensity posterior_tilted(double alpha, const BaseMeasure& base,
                                        QuadratureGrid grid, std::vector<double> psi_nodes);

  Kind kind() const { return kind_; }
  double alpha() const { return alpha_; }
  const BaseMeasure& base() const { return base_; }
  const QuadratureGrid& grid() const { return grid_; }
  std::span<const double> psi_nodes() const { return psi_nodes_; }

  /// Jump-size density in s at location z (without the alpha G0 factor).
  double jump_density(double s, double z) const;

 private:
  LevyIntensity(Kind kind, double alpha, const BaseMeasure& base, QuadratureGrid grid);

  Kind kind_;
  double alpha_;
  BaseMeasure base_;
  QuadratureGrid grid_;
  TiltSum psi_;
  std::vector<double> psi_nodes_;
};

/// N(v) = nu([v, inf) x Y).
double tail_mass(double v, const LevyIntensity& intensity);

/// s with N(s) = xi within tol_rel * xi. `hint` (> 0) seeds the search.
/// Throws TruncationUnderflow when xi exceeds N at the smallest normal double.
double invert_tail(double xi, const LevyIntensity& intensity, const InversionOptions& opts = {},
                   double hint = 0.0);

struct CrmOptions {
  InversionOptions inversion{};
  /// Stop once a new weight falls below weight_floor * (running total mass).
  double weight_floor = 1e-12;
};

struct CrmDraw {
  DiscreteMeasure measure;
  /// Ferguson-Klass inversion underflowed before H atoms were produced.
  bool truncated = false;
  /// Series stopped at the relative weight floor.
  bool floor_reached = false;
  /// Leading atoms that are fixed (posterior) atoms; 0 for prior draws.
  std::size_t fixed_count = 0;
};

/// H atoms (fewer on truncation or floor) in strictly decreasing weight order.
CrmDraw sample_crm(const LevyIntensity& intensity, std::size_t H, Rng& rng,
                   const CrmOptions& opts = {});

/// Fixed atoms of the posterior: locations z*_l, multiplicities n*_l, psi(z*_l).
struct FixedAtoms {
  std::span<const double> locations;
  std::span<const int> multiplicities;
  std::span<const double> psi;
};

/// Posterior measure draw: fixed atoms first (weights Gamma(n*, psi + 1)),
/// followed by the Ferguson-Klass part of CRM(nu^o).
CrmDraw sample_posterior_crm(const LevyIntensity& tilted, const FixedAtoms& fixed,
                             std::size_t H, Rng& rng, const CrmOptions& opts = {});

CrmDraw sample_posterior_crm(std::span<const double> u, std::span<const double> theta,
                             std::span<const double> z_star, std::span<const int> n_star,
                             double alpha, const BaseMeasure& base, std::size_t H, Rng& rng,
                             const CrmOptions& opts = {});

}  // namespace tiltcrm::crm
