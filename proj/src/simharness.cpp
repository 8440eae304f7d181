#include "tiltcrm/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "tiltcrm/errors.hpp"
#include "tiltcrm/functionals.hpp"
#include "tiltcrm/log.hpp"
#include "tiltcrm/tilt.hpp"

namespace tiltcrm::sim {

namespace {

double beta_pdf(double y, double a, double b) {
  const double log_b = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  return std::exp((a - 1.0) * std::log(y) + (b - 1.0) * std::log1p(-y) - log_b);
}

double trapezoid(std::span<const double> v, std::span<const double> grid) {
  double s = 0.0;
  for (std::size_t k = 1; k < grid.size(); ++k)
    s += 0.5 * (v[k] + v[k - 1]) * (grid[k] - grid[k - 1]);
  return s;
}

void check_same(std::size_t a, std::size_t b) {
  if (a != b || a == 0) throw ConfigError("metric inputs are not on a shared grid");
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

double se_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / double(v.size() - 1) / double(v.size()));
}

double median_of(std::vector<double> v) {
  return v.empty() ? std::numeric_limits<double>::quiet_NaN()
                   : functionals::sample_quantile(std::move(v), 0.5);
}

// Accumulates estimate / interval triples against a fixed truth.
struct Tally {
  std::vector<double> err, cover, length;

  void add(double truth, double est, double lo, double hi) {
    err.push_back(est - truth);
    cover.push_back(truth >= lo && truth <= hi ? 100.0 : 0.0);
    length.push_back(hi - lo);
  }

  SummaryRow row(std::string label) const {
    SummaryRow r;
    r.label = std::move(label);
    r.bias = mean_of(err);
    double ss = 0.0;
    for (double e : err) ss += e * e;
    r.rmse = err.empty() ? 0.0 : std::sqrt(ss / double(err.size()));
    r.coverage = mean_of(cover);
    r.coverage_se = se_of(cover);
    r.ci_length = mean_of(length);
    return r;
  }
};

struct Interval {
  double mean, lower, upper;
};

struct ReplicateResult {
  ReplicateMetrics metrics;
  std::vector<double> F_mean, F_lower, F_upper;
  std::vector<Interval> exceed;
  std::vector<Interval> beta;
};

}  // namespace

GriddedLaw::GriddedLaw(std::vector<double> midpoints, std::vector<double> density)
    : mid_(std::move(midpoints)), f_(std::move(density)) {
  if (mid_.size() < 2 || mid_.size() != f_.size())
    throw ConfigError("gridded law needs matching midpoints and densities");
  h_ = mid_[1] - mid_[0];
  double total = 0.0;
  for (double v : f_) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("gridded law: invalid density value");
    total += v * h_;
  }
  if (!(total > 0.0)) throw ConfigError("gridded law has zero mass");
  cum_.resize(f_.size());
  std::vector<double> w(f_.size());
  double run = 0.0;
  for (std::size_t k = 0; k < f_.size(); ++k) {
    f_[k] /= total;
    w[k] = std::max(f_[k] * h_, std::numeric_limits<double>::min());
    run += f_[k] * h_;
    cum_[k] = run;
  }
  const Support s{mid_.front() - 0.5 * h_, mid_.back() + 0.5 * h_};
  measure_ = DiscreteMeasure(mid_, std::move(w), s);
}

double GriddedLaw::mean() const {
  return tilt::tilted_mean(measure_, 0.0);
}

GriddedLaw GriddedLaw::tilted(double theta) const {
  const double shift = theta > 0.0 ? theta * mid_.back() : theta * mid_.front();
  std::vector<double> f(f_.size());
  for (std::size_t k = 0; k < f_.size(); ++k) f[k] = f_[k] * std::exp(theta * mid_[k] - shift);
  return GriddedLaw(mid_, std::move(f));
}

double GriddedLaw::cdf(double y) const {
  const double lo = mid_.front() - 0.5 * h_;
  if (y <= lo) return 0.0;
  const double pos = (y - lo) / h_;
  if (pos >= double(mid_.size())) return 1.0;
  const auto k = static_cast<std::size_t>(pos);
  const double before = k > 0 ? cum_[k - 1] : 0.0;
  return before + f_[k] * (y - (lo + double(k) * h_));
}

double GriddedLaw::quantile(double p) const {
  const double lo = mid_.front() - 0.5 * h_;
  if (p <= 0.0) return lo;
  auto it = std::lower_bound(cum_.begin(), cum_.end(), p);
  if (it == cum_.end()) return mid_.back() + 0.5 * h_;
  const auto k = static_cast<std::size_t>(it - cum_.begin());
  const double before = k > 0 ? cum_[k - 1] : 0.0;
  const double left = lo + double(k) * h_;
  return f_[k] > 0.0 ? left + (p - before) / f_[k] : left;
}

double GriddedLaw::sample(Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double y = quantile(unif(rng));
  // keep draws strictly inside the open support
  const double lo = mid_.front() - 0.5 * h_, hi = mid_.back() + 0.5 * h_;
  if (!(y > lo)) y = std::nextafter(lo, hi);
  if (!(y < hi)) y = std::nextafter(hi, lo);
  return y;
}

double substitute_baseline_density(double y) {
  if (!(y > 0.0 && y < 1.0)) return 0.0;
  return 0.7 * beta_pdf(y, 8.0, 3.0) + 0.3 * beta_pdf(y, 3.0, 8.0);
}

const GriddedLaw& substitute_baseline() {
  static const GriddedLaw law = GriddedLaw::from_density(substitute_baseline_density);
  return law;
}

Scenario Scenario::null_case(std::size_t n, int replicates) {
  return Scenario{ScenarioKind::null_case, Eigen::Vector2d(1.0, 0.0), n, replicates};
}

Scenario Scenario::regression(std::size_t n, int replicates) {
  return Scenario{ScenarioKind::regression, Eigen::Vector2d(0.2, 0.7), n, replicates};
}

std::string Scenario::name() const {
  return kind == ScenarioKind::null_case ? "null" : "regression";
}

namespace {

double conditional_theta(const Scenario& scenario, double x, const GriddedLaw& baseline) {
  const tilt::LinkSpec link(Support{0.0, 1.0});
  const double lambda = link.inverse(scenario.beta_true(0) + scenario.beta_true(1) * x);
  auto theta = tilt::try_solve_theta(baseline.as_measure(), lambda);
  if (!theta) throw ConfigError("scenario: true mean unattainable under the baseline");
  return *theta;
}

}  // namespace

GriddedLaw true_conditional(const Scenario& scenario, double x, const GriddedLaw& baseline) {
  return baseline.tilted(conditional_theta(scenario, x, baseline));
}

Dataset generate_replicate(const Scenario& scenario, Rng& rng, const GriddedLaw& baseline) {
  const double half = std::sqrt(12.0) / 4.0;
  std::uniform_real_distribution<double> ux(-half, half);
  Dataset d;
  d.x.resize(static_cast<Eigen::Index>(scenario.n), 2);
  d.y.resize(scenario.n);
  d.covariate_names = {"intercept", "x"};
  for (std::size_t i = 0; i < scenario.n; ++i) {
    const double x = ux(rng);
    const auto row = static_cast<Eigen::Index>(i);
    d.x(row, 0) = 1.0;
    d.x(row, 1) = x;
    d.y[i] = true_conditional(scenario, x, baseline).sample(rng);
  }
  return d;
}

double ks_stat(std::span<const double> F_hat, std::span<const double> F_true) {
  check_same(F_hat.size(), F_true.size());
  double d = 0.0;
  for (std::size_t k = 0; k < F_hat.size(); ++k) d = std::max(d, std::fabs(F_hat[k] - F_true[k]));
  return d;
}

double tv_dist(std::span<const double> f_hat, std::span<const double> f_true,
               std::span<const double> grid) {
  check_same(f_hat.size(), f_true.size());
  check_same(f_hat.size(), grid.size());
  std::vector<double> diff(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) diff[k] = std::fabs(f_hat[k] - f_true[k]);
  return 0.5 * trapezoid(diff, grid);
}

double grid_quantile(std::span<const double> F, std::span<const double> grid, double p) {
  check_same(F.size(), grid.size());
  const auto it = std::lower_bound(F.begin(), F.end(), p);
  if (it == F.begin()) return grid.front();
  if (it == F.end()) return grid.back();
  const auto k = static_cast<std::size_t>(it - F.begin());
  const double dF = F[k] - F[k - 1];
  if (!(dF > 0.0)) return grid[k];
  return grid[k - 1] + (p - F[k - 1]) / dF * (grid[k] - grid[k - 1]);
}

double wasserstein1(std::span<const double> F_hat, std::span<const double> F_true,
                    std::span<const double> grid, std::size_t levels) {
  check_same(F_hat.size(), F_true.size());
  check_same(F_hat.size(), grid.size());
  if (levels == 0) throw ConfigError("wasserstein1 needs at least one level");
  double s = 0.0;
  for (std::size_t j = 0; j < levels; ++j) {
    const double p = (double(j) + 0.5) / double(levels);
    s += std::fabs(grid_quantile(F_hat, grid, p) - grid_quantile(F_true, grid, p));
  }
  return s / double(levels);
}

double weighted_summary(std::span<const double> m, std::span<const double> f_true,
                        std::span<const double> grid) {
  check_same(m.size(), f_true.size());
  check_same(m.size(), grid.size());
  std::vector<double> prod(m.size());
  for (std::size_t k = 0; k < m.size(); ++k) prod[k] = m[k] * f_true[k];
  return trapezoid(prod, grid);
}

MetricsReport run_study(const Scenario& scenario, const mcmc::McmcConfig& fit,
                        std::uint64_t master_seed, const GriddedLaw& baseline) {
  if (scenario.replicates < 1 || scenario.n < 1)
    throw ConfigError("study needs at least one replicate and one observation");
  mcmc::McmcConfig config = fit;
  config.m0 = {mcmc::M0Policy::Kind::fixed, baseline.mean()};
  config.validate();

  const std::vector<double> grid(baseline.midpoints().begin(), baseline.midpoints().end());
  const std::size_t G = grid.size();
  std::vector<double> F_true(G), f_true(baseline.density().begin(), baseline.density().end());
  for (std::size_t k = 0; k < G; ++k) F_true[k] = baseline.cdf(grid[k]);

  struct Cell {
    double x, level, y0;
  };
  std::vector<Cell> cells;
  for (double x : exceedance_x_values()) {
    const GriddedLaw cond = true_conditional(scenario, x, baseline);
    for (double level : exceedance_levels()) cells.push_back({x, level, cond.quantile(level)});
  }

  const int R = scenario.replicates;
  std::vector<ReplicateResult> results(static_cast<std::size_t>(R));

#pragma omp parallel for schedule(dynamic, 1)
  for (int r = 0; r < R; ++r) {
    ReplicateResult& out = results[static_cast<std::size_t>(r)];
    out.metrics.index = r;
    try {
      Rng rng = make_rng(master_seed, static_cast<std::uint64_t>(r));
      const Dataset data = generate_replicate(scenario, rng, baseline);
      const mcmc::PosteriorDraws draws = mcmc::run_chain(data, config, rng);
      if (draws.size() == 0) throw NumericalError("chain produced no draws");

      const auto cdf = functionals::baseline_cdf(draws, grid);
      const auto dens = functionals::baseline_density(draws, grid);
      out.F_mean = cdf.summary.mean;
      out.F_lower = cdf.summary.lower;
      out.F_upper = cdf.summary.upper;

      ReplicateMetrics& m = out.metrics;
      m.ks = ks_stat(out.F_mean, F_true);
      m.tv = tv_dist(dens.summary.mean, f_true, grid);
      m.w1 = wasserstein1(out.F_mean, F_true, grid);
      std::vector<double> bias(G), cover(G), length(G);
      for (std::size_t k = 0; k < G; ++k) {
        bias[k] = out.F_mean[k] - F_true[k];
        cover[k] = F_true[k] >= out.F_lower[k] && F_true[k] <= out.F_upper[k] ? 1.0 : 0.0;
        length[k] = out.F_upper[k] - out.F_lower[k];
      }
      m.weighted_bias = weighted_summary(bias, f_true, grid);
      m.weighted_coverage = 100.0 * weighted_summary(cover, f_true, grid);
      m.weighted_ci_length = weighted_summary(length, f_true, grid);
      m.u_accept = draws.diagnostics.u.rate();
      m.mu_accept = draws.diagnostics.mu.rate();
      m.beta_accept = draws.diagnostics.beta.rate();

      for (const Cell& c : cells) {
        Eigen::RowVectorXd x(2);
        x << 1.0, c.x;
        const auto e = functionals::exceedance(draws, x, c.y0);
        out.exceed.push_back({e.mean, e.lower, e.upper});
      }
      for (Eigen::Index j = 0; j < draws.beta.cols(); ++j) {
        std::vector<double> col(draws.beta.col(j).data(),
                                draws.beta.col(j).data() + draws.beta.rows());
        out.beta.push_back({mean_of(col), functionals::sample_quantile(col, 0.025),
                            functionals::sample_quantile(col, 0.975)});
      }
      m.ok = true;
    } catch (const std::exception& e) {
      out.metrics.ok = false;
      out.metrics.error = e.what();
      std::ostringstream os;
      os << "replicate " << r << " failed: " << e.what();
      log::error(os.str());
    }
  }

  MetricsReport report;
  report.scenario = scenario;
  report.grid = grid;
  report.bias.assign(G, 0.0);
  report.rmse.assign(G, 0.0);
  report.coverage.assign(G, 0.0);
  report.ci_length.assign(G, 0.0);
  std::vector<double> ks, tv, w1;
  std::vector<Tally> exceed(cells.size());
  std::vector<Tally> beta(2);
  std::vector<double> w_cover;
  int ok = 0;
  for (const ReplicateResult& res : results) {
    report.replicates.push_back(res.metrics);
    if (!res.metrics.ok) {
      ++report.failures;
      continue;
    }
    ++ok;
    ks.push_back(res.metrics.ks);
    tv.push_back(res.metrics.tv);
    w1.push_back(res.metrics.w1);
    w_cover.push_back(res.metrics.weighted_coverage);
    for (std::size_t k = 0; k < G; ++k) {
      const double e = res.F_mean[k] - F_true[k];
      report.bias[k] += e;
      report.rmse[k] += e * e;
      report.coverage[k] +=
          F_true[k] >= res.F_lower[k] && F_true[k] <= res.F_upper[k] ? 100.0 : 0.0;
      report.ci_length[k] += res.F_upper[k] - res.F_lower[k];
    }
    for (std::size_t c = 0; c < cells.size(); ++c)
      exceed[c].add(1.0 - cells[c].level, res.exceed[c].mean, res.exceed[c].lower,
                    res.exceed[c].upper);
    for (std::size_t j = 0; j < res.beta.size() && j < 2; ++j)
      beta[j].add(scenario.beta_true(static_cast<Eigen::Index>(j)), res.beta[j].mean,
                  res.beta[j].lower, res.beta[j].upper);
  }
  report.failed = double(report.failures) > 0.05 * double(R);
  if (ok > 0) {
    for (std::size_t k = 0; k < G; ++k) {
      report.bias[k] /= ok;
      report.rmse[k] = std::sqrt(report.rmse[k] / ok);
      report.coverage[k] /= ok;
      report.ci_length[k] /= ok;
    }
    report.baseline.label = "F_mu";
    report.baseline.bias = weighted_summary(report.bias, f_true, grid);
    report.baseline.rmse = weighted_summary(report.rmse, f_true, grid);
    report.baseline.coverage = weighted_summary(report.coverage, f_true, grid);
    report.baseline.coverage_se = se_of(w_cover);
    report.baseline.ci_length = weighted_summary(report.ci_length, f_true, grid);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      ExceedanceRow row;
      row.x = cells[c].x;
      row.level = cells[c].level;
      row.y0 = cells[c].y0;
      row.truth = 1.0 - cells[c].level;
      row.stats = exceed[c].row("exceedance");
      report.exceedance.push_back(row);
    }
    report.beta.push_back(beta[0].row("beta0"));
    report.beta.push_back(beta[1].row("beta1"));
  }
  report.median_ks = median_of(ks);
  report.median_tv = median_of(tv);
  report.median_w1 = median_of(w1);
  return report;
}

}  // namespace tiltcrm::sim
