#include "tiltcrm/crm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "tiltcrm/errors.hpp"
#include "tiltcrm/kernels.hpp"
#include "tiltcrm/special.hpp"

namespace tiltcrm::crm {

double TiltSum::operator()(double z) const {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * std::exp(theta[i] * z);
  return s;
}

LevyIntensity::LevyIntensity(Kind kind, double alpha, const BaseMeasure& base,
                             QuadratureGrid grid)
    : kind_(kind), alpha_(alpha), base_(base), grid_(std::move(grid)) {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw ConfigError("Levy intensity: alpha must be positive");
}

LevyIntensity LevyIntensity::gamma(double alpha, const BaseMeasure& base, std::size_t nodes) {
  LevyIntensity out(Kind::HomogeneousGamma, alpha, base, QuadratureGrid(base, nodes));
  out.psi_nodes_.assign(out.grid_.size(), 0.0);
  return out;
}

LevyIntensity LevyIntensity::posterior_tilted(double alpha, const BaseMeasure& base, TiltSum psi,
                                              std::size_t nodes) {
  if (psi.u.size() != psi.theta.size())
    throw NumericalError("posterior intensity: u and theta differ in length");
  LevyIntensity out(Kind::PosteriorTilted, alpha, base, QuadratureGrid(base, nodes));
  out.psi_nodes_.assign(out.grid_.size(), 0.0);
  kernels::parallel::psi_at(psi.u, psi.theta, out.grid_.nodes(), out.psi_nodes_);
  out.psi_ = std::move(psi);
  return out;
}

LevyIntensity LevyIntensity::posterior_tilted(double alpha, const BaseMeasure& base,
                                              QuadratureGrid grid, std::vector<double> psi_nodes) {
  if (psi_nodes.size() != grid.size())
    throw NumericalError("posterior intensity: psi values do not match the grid");
  LevyIntensity out(Kind::PosteriorTilted, alpha, base, std::move(grid));
  out.psi_nodes_ = std::move(psi_nodes);
  return out;
}

double LevyIntensity::jump_density(double s, double z) const {
  const double psi = kind_ == Kind::HomogeneousGamma || psi_.empty() ? 0.0 : psi_(z);
  return std::exp(-s * (1.0 + psi)) / s;
}

namespace {

struct TailEval {
  double value;       // N(s)
  double log_slope;   // dN / dlog s  (negative)
};

TailEval eval_tail(double s, const LevyIntensity& I) {
  if (I.kind() == LevyIntensity::Kind::HomogeneousGamma)
    return {I.alpha() * expint_e1(s), -I.alpha() * std::exp(-s)};
  const auto w = I.grid().weights();
  const auto psi = I.psi_nodes();
  double value = 0.0, slope = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double x = s * (1.0 + psi[j]);
    value += w[j] * expint_e1(x);
    slope += w[j] * std::exp(-x);
  }
  return {I.alpha() * value, -I.alpha() * slope};
}

constexpr double kLogMinS = -708.0;  // ~ log(DBL_MIN)
constexpr double kLogMaxS = 700.0;

}  // namespace

double tail_mass(double v, const LevyIntensity& intensity) {
  if (!(v > 0.0)) throw NumericalError("tail_mass: v must be positive");
  const double n = eval_tail(v, intensity).value;
  if (!std::isfinite(n)) {
    std::ostringstream os;
    os << "tail_mass: non-finite result at v = " << v;
    throw NumericalError(os.str());
  }
  return n;
}

double invert_tail(double xi, const LevyIntensity& I, const InversionOptions& opts, double hint) {
  if (!(xi > 0.0)) throw NumericalError("invert_tail: xi must be positive");
  const double tol = opts.tol_rel * xi;

  // g(t) = N(e^t) - xi is strictly decreasing in t.
  double t = hint > 0.0 ? std::log(hint) : 0.0;
  double t_lo = kLogMinS, t_hi = kLogMaxS;  // g(t_lo) > 0 > g(t_hi) once established
  bool have_lo = false, have_hi = false;
  double step = 1.0;

  for (int it = 0; it < opts.max_iterations; ++it) {
    const TailEval e = eval_tail(std::exp(t), I);
    const double g = e.value - xi;
    if (std::fabs(g) <= tol) return std::exp(t);
    if (g > 0.0) {
      t_lo = t;
      have_lo = true;
    } else {
      t_hi = t;
      have_hi = true;
      if (t <= kLogMinS) {
        std::ostringstream os;
        os << "invert_tail: xi = " << xi << " exceeds the tail mass at the smallest weight";
        throw TruncationUnderflow(os.str());
      }
    }
    double next = e.log_slope < 0.0 ? t - g / e.log_slope : std::numeric_limits<double>::quiet_NaN();
    if (!(std::isfinite(next) && next > t_lo && next < t_hi)) {
      if (have_lo && have_hi) {
        next = 0.5 * (t_lo + t_hi);
      } else if (!have_hi) {
        next = std::min(t + step, kLogMaxS);
        step *= 2.0;
      } else {
        next = std::max(t - step, kLogMinS);
        step *= 2.0;
      }
    }
    if (have_lo && have_hi && t_hi - t_lo < 1e-15 * std::max(1.0, std::fabs(t))) return std::exp(t);
    t = next;
  }
  return std::exp(t);
}

namespace {

// Location of a Ferguson-Klass atom with weight s: density proportional to
// exp(-s psi(z)) g0(z), inverted cell-wise on the quadrature grid.
double sample_location(const LevyIntensity& I, double s, std::vector<double>& scratch, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (I.kind() == LevyIntensity::Kind::HomogeneousGamma) return I.base().quantile(unif(rng));
  const auto w = I.grid().weights();
  const auto psi = I.psi_nodes();
  const double psi_min = *std::min_element(psi.begin(), psi.end());
  scratch.resize(w.size());
  double total = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    total += w[j] * std::exp(-s * (psi[j] - psi_min));
    scratch[j] = total;
  }
  const double target = unif(rng) * total;
  std::size_t cell = static_cast<std::size_t>(
      std::upper_bound(scratch.begin(), scratch.end(), target) - scratch.begin());
  cell = std::min(cell, w.size() - 1);
  const double half = 0.5 * I.grid().cell_width();
  const double centre = I.grid().node(cell);
  const Support& sup = I.base().support();
  return std::clamp(centre - half + unif(rng) * 2.0 * half, sup.lo, sup.hi);
}

struct FergusonKlass {
  std::vector<double> locations;
  std::vector<double> weights;
  bool truncated = false;
  bool floor_reached = false;
};

FergusonKlass ferguson_klass(const LevyIntensity& I, std::size_t H, Rng& rng,
                             const CrmOptions& opts) {
  if (H == 0) throw ConfigError("CRM truncation H must be at least 1");
  FergusonKlass out;
  out.locations.reserve(std::min<std::size_t>(H, 64));
  out.weights.reserve(std::min<std::size_t>(H, 64));
  std::exponential_distribution<double> exp1(1.0);
  std::vector<double> scratch;
  double xi = 0.0;
  double running = 0.0;
  double prev = 0.0;
  for (std::size_t h = 0; h < H; ++h) {
    const double xi_prev = xi;
    xi += exp1(rng);
    // Near s -> 0 the tail is ~ -alpha log s, which seeds the next root.
    const double hint = h == 0 ? 0.0 : prev * std::exp(-(xi - xi_prev) / I.alpha());
    double s;
    try {
      s = invert_tail(xi, I, opts.inversion, hint);
    } catch (const TruncationUnderflow&) {
      out.truncated = true;
      break;
    }
    if (h > 0 && s >= prev) s = std::nextafter(prev, 0.0);
    if (h > 0 && s < opts.weight_floor * running) {
      out.floor_reached = true;
      break;
    }
    out.weights.push_back(s);
    out.locations.push_back(sample_location(I, s, scratch, rng));
    running += s;
    prev = s;
  }
  if (out.weights.empty())
    throw TruncationUnderflow("Ferguson-Klass series produced no atoms");
  return out;
}

}  // namespace

CrmDraw sample_crm(const LevyIntensity& intensity, std::size_t H, Rng& rng,
                   const CrmOptions& opts) {
  FergusonKlass fk = ferguson_klass(intensity, H, rng, opts);
  CrmDraw out{DiscreteMeasure(std::move(fk.locations), std::move(fk.weights),
                              intensity.base().support()),
              fk.truncated, fk.floor_reached, 0};
  return out;
}

CrmDraw sample_posterior_crm(const LevyIntensity& tilted, const FixedAtoms& fixed, std::size_t H,
                             Rng& rng, const CrmOptions& opts) {
  const std::size_t k = fixed.locations.size();
  if (fixed.multiplicities.size() != k || fixed.psi.size() != k)
    throw NumericalError("posterior CRM: fixed atom arrays differ in length");

  FergusonKlass fk = ferguson_klass(tilted, H, rng, opts);

  std::vector<double> loc;
  std::vector<double> w;
  loc.reserve(k + fk.weights.size());
  w.reserve(k + fk.weights.size());
  for (std::size_t l = 0; l < k; ++l) {
    if (fixed.multiplicities[l] < 1) throw NumericalError("posterior CRM: multiplicity < 1");
    std::gamma_distribution<double> gam(static_cast<double>(fixed.multiplicities[l]),
                                        1.0 / (fixed.psi[l] + 1.0));
    double j = gam(rng);
    if (!(j > 0.0)) j = std::numeric_limits<double>::min();
    loc.push_back(fixed.locations[l]);
    w.push_back(j);
  }
  loc.insert(loc.end(), fk.locations.begin(), fk.locations.end());
  w.insert(w.end(), fk.weights.begin(), fk.weights.end());
  return {DiscreteMeasure(std::move(loc), std::move(w), tilted.base().support()), fk.truncated,
          fk.floor_reached, k};
}

CrmDraw sample_posterior_crm(std::span<const double> u, std::span<const double> theta,
                             std::span<const double> z_star, std::span<const int> n_star,
                             double alpha, const BaseMeasure& base, std::size_t H, Rng& rng,
                             const CrmOptions& opts) {
  if (u.size() != theta.size()) throw NumericalError("posterior CRM: u and theta differ in length");
  if (z_star.size() != n_star.size())
    throw NumericalError("posterior CRM: z_star and n_star differ in length");
  for (double v : u)
    if (!(v > 0.0)) throw NumericalError("posterior CRM: auxiliary variables must be positive");

  if (u.empty() && z_star.empty()) return sample_crm(LevyIntensity::gamma(alpha, base), H, rng, opts);

  TiltSum psi{{u.begin(), u.end()}, {theta.begin(), theta.end()}};
  const LevyIntensity tilted = LevyIntensity::posterior_tilted(alpha, base, psi);
  std::vector<double> psi_star(z_star.size(), 0.0);
  kernels::serial::psi_at(u, theta, z_star, psi_star);
  return sample_posterior_crm(tilted, FixedAtoms{z_star, n_star, psi_star}, H, rng, opts);
}

}  // namespace tiltcrm::crm
