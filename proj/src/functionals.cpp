#include "tiltcrm/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "tiltcrm/errors.hpp"
#include "tiltcrm/kernels.hpp"
#include "tiltcrm/log.hpp"
#include "tiltcrm/tilt.hpp"

namespace tiltcrm::functionals {

double sample_quantile(std::vector<double> v, double p) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double h = (double(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - double(lo)) * (v[hi] - v[lo]);
}

Band summarize_rows(const Eigen::MatrixXd& values) {
  const auto cols = static_cast<std::size_t>(values.cols());
  Band band;
  band.mean.assign(cols, std::numeric_limits<double>::quiet_NaN());
  band.lower = band.mean;
  band.upper = band.mean;
  std::vector<double> col;
  for (std::size_t j = 0; j < cols; ++j) {
    col.clear();
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
      const double v = values(r, static_cast<Eigen::Index>(j));
      if (!std::isnan(v)) col.push_back(v);
    }
    if (col.empty()) continue;
    double s = 0.0;
    for (double v : col) s += v;
    band.mean[j] = s / double(col.size());
    band.lower[j] = sample_quantile(col, 0.025);
    band.upper[j] = sample_quantile(col, 0.975);
  }
  return band;
}

std::vector<double> default_grid(const mcmc::PosteriorDraws& draws, std::size_t points) {
  if (points < 2) throw ConfigError("grid needs at least two points");
  const double lo = draws.support.lo - draws.halfwidth;
  const double hi = draws.support.hi + draws.halfwidth;
  std::vector<double> g(points);
  for (std::size_t k = 0; k < points; ++k)
    g[k] = lo + (hi - lo) * double(k) / double(points - 1);
  return g;
}

double mixture_density(std::span<const double> locations, std::span<const double> weights,
                       double c, double y) {
  double f = 0.0;
  for (std::size_t l = 0; l < locations.size(); ++l)
    if (std::fabs(y - locations[l]) <= c) f += weights[l];
  return f / (2.0 * c);
}

double mixture_cdf(std::span<const double> locations, std::span<const double> weights, double c,
                   double y) {
  double F = 0.0;
  for (std::size_t l = 0; l < locations.size(); ++l)
    F += weights[l] * std::clamp((y - (locations[l] - c)) / (2.0 * c), 0.0, 1.0);
  return std::min(F, 1.0);  // rounding can overshoot
}

double mixture_quantile(std::span<const double> locations, std::span<const double> weights,
                        double c, double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("quantile level must lie in (0, 1)");
  // Slope of F changes by +-w/(2c) at z -+ c; sweep the sorted breakpoints.
  struct Event {
    double at;
    double dslope;
  };
  std::vector<Event> ev;
  ev.reserve(2 * locations.size());
  for (std::size_t l = 0; l < locations.size(); ++l) {
    ev.push_back({locations[l] - c, weights[l] / (2.0 * c)});
    ev.push_back({locations[l] + c, -weights[l] / (2.0 * c)});
  }
  std::sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.at < b.at; });
  double F = 0.0, slope = 0.0;
  for (std::size_t k = 0; k + 1 < ev.size(); ++k) {
    slope += ev[k].dslope;
    const double dx = ev[k + 1].at - ev[k].at;
    const double next = F + slope * dx;
    if (next >= p && slope > 0.0) return ev[k].at + (p - F) / slope;
    F = next;
  }
  return ev.back().at;
}

std::optional<double> draw_tilt(const mcmc::PosteriorDraws& draws, std::size_t r,
                                const Eigen::RowVectorXd& x) {
  const auto row = static_cast<Eigen::Index>(r);
  if (x.size() != draws.beta.cols()) throw DataError("covariate row has the wrong length");
  const double eta = x.dot(draws.beta.row(row));
  return tilt::try_solve_theta(draws.baseline[r], draws.link.inverse(eta));
}

namespace {

std::vector<double> clip_grid(const mcmc::PosteriorDraws& draws, std::span<const double> y_grid) {
  const double lo = draws.support.lo - draws.halfwidth;
  const double hi = draws.support.hi + draws.halfwidth;
  std::vector<double> g;
  g.reserve(y_grid.size());
  for (double y : y_grid)
    if (y >= lo && y <= hi) g.push_back(y);
  if (g.size() != y_grid.size())
    log::info("grid points outside the support of the convolved density were dropped");
  if (!std::is_sorted(g.begin(), g.end())) throw ConfigError("evaluation grid must be sorted");
  return g;
}

void mark_skips(std::size_t skipped, std::size_t total, bool& warn) {
  warn = total > 0 && double(skipped) > kSkipWarnFraction * double(total);
  if (warn) {
    std::ostringstream os;
    os << skipped << " of " << total << " draws skipped: fitted mean unattainable at this x";
    log::error(os.str());
  }
}

enum class Kind { density, cdf };

DensityGrid evaluate(const mcmc::PosteriorDraws& draws, const std::vector<double>& tilts,
                     const std::vector<std::size_t>& used, std::vector<double> grid, Kind kind) {
  DensityGrid out;
  out.y_grid = std::move(grid);
  std::vector<DiscreteMeasure> measures;
  measures.reserve(used.size());
  for (std::size_t r : used) measures.push_back(draws.baseline[r]);
  const std::size_t G = out.y_grid.size();
  std::vector<double> buf(used.size() * G);
  if (kind == Kind::density)
    kernels::parallel::mixture_density_rows(measures, tilts, draws.halfwidth, out.y_grid, buf);
  else
    kernels::parallel::mixture_cdf_rows(measures, tilts, draws.halfwidth, out.y_grid, buf);
  out.values = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      buf.data(), static_cast<Eigen::Index>(used.size()), static_cast<Eigen::Index>(G));
  out.summary = summarize_rows(out.values);
  return out;
}

DensityGrid baseline(const mcmc::PosteriorDraws& draws, std::span<const double> y_grid,
                     Kind kind) {
  std::vector<std::size_t> used(draws.size());
  for (std::size_t r = 0; r < used.size(); ++r) used[r] = r;
  return evaluate(draws, std::vector<double>(used.size(), 0.0), used, clip_grid(draws, y_grid),
                  kind);
}

DensityGrid conditional(const mcmc::PosteriorDraws& draws, const Eigen::RowVectorXd& x,
                        std::span<const double> y_grid, Kind kind) {
  std::vector<std::size_t> used;
  std::vector<double> tilts;
  for (std::size_t r = 0; r < draws.size(); ++r) {
    if (auto t = draw_tilt(draws, r, x)) {
      used.push_back(r);
      tilts.push_back(*t);
    }
  }
  DensityGrid out = evaluate(draws, tilts, used, clip_grid(draws, y_grid), kind);
  out.skipped = draws.size() - used.size();
  mark_skips(out.skipped, draws.size(), out.skip_warning);
  return out;
}

std::vector<double> tilted_normalized(const DiscreteMeasure& mu, double theta) {
  const double b = tilt::log_norm_const(mu, theta);
  std::vector<double> w(mu.size());
  for (std::size_t l = 0; l < mu.size(); ++l)
    w[l] = mu.weight(l) * std::exp(theta * mu.location(l) - b);
  return w;
}

}  // namespace

DensityGrid baseline_density(const mcmc::PosteriorDraws& draws, std::span<const double> y_grid) {
  return baseline(draws, y_grid, Kind::density);
}

DensityGrid baseline_cdf(const mcmc::PosteriorDraws& draws, std::span<const double> y_grid) {
  return baseline(draws, y_grid, Kind::cdf);
}

DensityGrid conditional_density(const mcmc::PosteriorDraws& draws, const Eigen::RowVectorXd& x,
                                std::span<const double> y_grid) {
  return conditional(draws, x, y_grid, Kind::density);
}

DensityGrid conditional_cdf(const mcmc::PosteriorDraws& draws, const Eigen::RowVectorXd& x,
                            std::span<const double> y_grid) {
  return conditional(draws, x, y_grid, Kind::cdf);
}

Estimate exceedance(const mcmc::PosteriorDraws& draws, const Eigen::RowVectorXd& x, double y0) {
  Estimate est;
  for (std::size_t r = 0; r < draws.size(); ++r) {
    const auto t = draw_tilt(draws, r, x);
    if (!t) {
      ++est.skipped;
      continue;
    }
    const DiscreteMeasure& mu = draws.baseline[r];
    const std::vector<double> w = tilted_normalized(mu, *t);
    est.per_draw.push_back(1.0 - mixture_cdf(mu.locations(), w, draws.halfwidth, y0));
  }
  mark_skips(est.skipped, draws.size(), est.skip_warning);
  if (est.per_draw.empty()) throw NumericalError("exceedance: every draw was skipped");
  double s = 0.0;
  for (double v : est.per_draw) s += v;
  est.mean = s / double(est.per_draw.size());
  est.lower = sample_quantile(est.per_draw, 0.025);
  est.upper = sample_quantile(est.per_draw, 0.975);
  return est;
}

QuantileCurve quantile_curve(const mcmc::PosteriorDraws& draws, double alpha,
                             const Eigen::MatrixXd& x_rows) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("quantile level must lie in (0, 1)");
  QuantileCurve out;
  out.alpha = alpha;
  const auto R = static_cast<Eigen::Index>(draws.size());
  const Eigen::Index X = x_rows.rows();
  out.values.setConstant(R, X, std::numeric_limits<double>::quiet_NaN());
  out.skipped.assign(static_cast<std::size_t>(X), 0);
  for (Eigen::Index j = 0; j < X; ++j) {
    const Eigen::RowVectorXd x = x_rows.row(j);
    for (Eigen::Index r = 0; r < R; ++r) {
      const auto t = draw_tilt(draws, static_cast<std::size_t>(r), x);
      if (!t) {
        ++out.skipped[static_cast<std::size_t>(j)];
        continue;
      }
      const DiscreteMeasure& mu = draws.baseline[static_cast<std::size_t>(r)];
      out.values(r, j) =
          mixture_quantile(mu.locations(), tilted_normalized(mu, *t), draws.halfwidth, alpha);
    }
  }
  const std::size_t worst = out.skipped.empty()
                                ? 0
                                : *std::max_element(out.skipped.begin(), out.skipped.end());
  mark_skips(worst, draws.size(), out.skip_warning);
  out.summary = summarize_rows(out.values);
  return out;
}

}  // namespace tiltcrm::functionals
