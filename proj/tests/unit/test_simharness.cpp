#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "stats.hpp"
#include "tiltcrm/simharness.hpp"
#include "tiltcrm/tilt.hpp"

using namespace tiltcrm;
using namespace tiltcrm::sim;

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t k = 0; k < n; ++k) g[k] = lo + (hi - lo) * double(k) / double(n - 1);
  return g;
}

std::vector<double> uniform_cdf(const std::vector<double>& g, double a, double b) {
  std::vector<double> F;
  for (double y : g) F.push_back(std::clamp((y - a) / (b - a), 0.0, 1.0));
  return F;
}

std::vector<double> uniform_pdf(const std::vector<double>& g, double a, double b) {
  std::vector<double> f;
  for (double y : g) f.push_back(y >= a && y <= b ? 1.0 / (b - a) : 0.0);
  return f;
}

double logistic(double e) { return 1.0 / (1.0 + std::exp(-e)); }

}  // namespace

TEST_CASE("distance metrics on closed-form examples") {
  const auto g = linspace(0.0, 1.0, 2001);
  const auto F1 = uniform_cdf(g, 0.0, 1.0), Fh = uniform_cdf(g, 0.0, 0.5);
  const auto f1 = uniform_pdf(g, 0.0, 1.0);
  CHECK(ks_stat(F1, F1) == 0.0);
  CHECK(tv_dist(f1, f1, g) == 0.0);
  CHECK(wasserstein1(F1, F1, g) == 0.0);
  CHECK(ks_stat(F1, Fh) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(tv_dist(f1, uniform_pdf(g, 0.0, 0.5), g) == doctest::Approx(0.5).epsilon(2e-3));

  const auto g2 = linspace(0.0, 1.1, 2201);
  const double w1 = wasserstein1(uniform_cdf(g2, 0.0, 1.0), uniform_cdf(g2, 0.1, 1.1), g2);
  CHECK(w1 == doctest::Approx(0.1).epsilon(1e-6));
  CHECK_THROWS(ks_stat(F1, std::vector<double>(10, 0.0)));
}

TEST_CASE("weighted summary") {
  const auto& base = substitute_baseline();
  const std::vector<double> grid(base.midpoints().begin(), base.midpoints().end());
  const std::vector<double> f(base.density().begin(), base.density().end());
  const double one = weighted_summary(std::vector<double>(grid.size(), 1.0), f, grid);
  CHECK(one == doctest::Approx(1.0).epsilon(1e-4));

  std::vector<double> sym(grid.size()), upper(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    sym[k] = 6.0 * grid[k] * (1.0 - grid[k]);
    upper[k] = grid[k] > 0.5 ? 1.0 : 0.0;
  }
  const double total = weighted_summary(std::vector<double>(grid.size(), 1.0), sym, grid);
  CHECK(weighted_summary(upper, sym, grid) == doctest::Approx(0.5 * total).epsilon(1e-12));

  // Monte-Carlo oracle: E m(Y), Y ~ f.
  auto m = [](double y) { return std::sin(3.0 * y) + y * y; };
  std::vector<double> mv;
  for (double y : grid) mv.push_back(m(y));
  Rng rng = make_rng(41, 0);
  std::vector<double> mc;
  for (int i = 0; i < 20000; ++i) mc.push_back(m(base.sample(rng)));
  CHECK(std::fabs(weighted_summary(mv, f, grid) - teststats::mean(mc)) < 3.0 * teststats::se(mc));
}

TEST_CASE("substitute baseline and its gridded law") {
  const auto& base = substitute_baseline();
  CHECK(base.size() == kTruthGridPoints);
  CHECK(base.mean() == doctest::Approx(0.7 * 8.0 / 11.0 + 0.3 * 3.0 / 11.0).epsilon(1e-5));
  CHECK(base.cdf(0.0) == 0.0);
  CHECK(base.cdf(1.0) == doctest::Approx(1.0).epsilon(1e-12));
  for (double p = 0.013; p < 1.0; p += 0.0731) {
    CHECK(std::fabs(base.cdf(base.quantile(p)) - p) < 1e-9);
  }
  const GriddedLaw t = base.tilted(1.7);
  CHECK(t.mean() > base.mean());
}

TEST_CASE("null-case responses are independent of x") {
  Rng rng = make_rng(42, 0);
  const Dataset d = generate_replicate(Scenario::null_case(10000, 1), rng);
  REQUIRE(d.n() == 10000);
  REQUIRE(d.p() == 2);
  std::vector<double> x(d.n());
  for (std::size_t i = 0; i < d.n(); ++i) x[i] = d.x(Eigen::Index(i), 1);
  const double mx = teststats::mean(x), my = teststats::mean(d.y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < d.n(); ++i) {
    sxy += (x[i] - mx) * (d.y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (d.y[i] - my) * (d.y[i] - my);
  }
  CHECK(std::fabs(sxy / std::sqrt(sxx * syy)) < 0.02);
  CHECK(teststats::sd(x) == doctest::Approx(0.5).epsilon(0.02));
  const double half = std::sqrt(12.0) / 4.0;
  for (double v : x) REQUIRE(std::fabs(v) <= half);
  for (double y : d.y) REQUIRE((y > 0.0 && y < 1.0));
}

TEST_CASE("regression conditional means follow the logit link") {
  Rng rng = make_rng(43, 0);
  const Dataset d = generate_replicate(Scenario::regression(20000, 1), rng);
  const double half = std::sqrt(12.0) / 4.0;
  const int bins = 5;
  std::vector<std::vector<double>> resid(bins);
  for (std::size_t i = 0; i < d.n(); ++i) {
    const double x = d.x(Eigen::Index(i), 1);
    const int b = std::min(bins - 1, int((x + half) / (2.0 * half) * bins));
    resid[b].push_back(d.y[i] - logistic(0.2 + 0.7 * x));
  }
  for (const auto& r : resid) {
    REQUIRE(r.size() > 1000);
    CHECK(std::fabs(teststats::mean(r)) < 3.0 * teststats::se(r));
  }
}

TEST_CASE("tilted sampler agrees with a rejection sampler") {
  const Scenario sc = Scenario::regression(1, 1);
  const double x = 0.5;
  const GriddedLaw truth = true_conditional(sc, x);
  const double theta = tilt::solve_theta(substitute_baseline().as_measure(),
                                         logistic(0.2 + 0.7 * x));
  CHECK(truth.mean() == doctest::Approx(logistic(0.55)).epsilon(1e-6));
  Rng rng = make_rng(44, 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> direct, rejection;
  for (int i = 0; i < 4000; ++i) direct.push_back(truth.sample(rng));
  // Envelope: baseline draws accepted with probability e^{theta (y - 1)} (theta > 0).
  REQUIRE(theta > 0.0);
  while (rejection.size() < 4000) {
    const double y = substitute_baseline().sample(rng);
    if (unif(rng) < std::exp(theta * (y - 1.0))) rejection.push_back(y);
  }
  CHECK(teststats::ks_two_sample(direct, rejection).p > 0.01);
}

TEST_CASE("study metrics are deterministic and well formed") {
  mcmc::McmcConfig cfg;
  cfg.n_iter = 200;
  cfg.burn_in = 100;
  cfg.thin = 5;
  const Scenario sc = Scenario::regression(40, 3);
  const MetricsReport a = run_study(sc, cfg, 7);
  const MetricsReport b = run_study(sc, cfg, 7);
  REQUIRE(a.replicates.size() == 3);
  CHECK(a.failures == 0);
  CHECK_FALSE(a.failed);
  for (std::size_t r = 0; r < a.replicates.size(); ++r) {
    const auto& ra = a.replicates[r];
    const auto& rb = b.replicates[r];
    CHECK(ra.ks == rb.ks);
    CHECK(ra.tv == rb.tv);
    CHECK(ra.w1 == rb.w1);
    CHECK(ra.weighted_coverage == rb.weighted_coverage);
    CHECK((ra.ks >= 0.0 && ra.ks <= 1.0));
    CHECK((ra.tv >= 0.0 && ra.tv <= 1.0));
    CHECK(ra.w1 >= 0.0);
  }
  CHECK(a.baseline.bias == b.baseline.bias);
  CHECK(a.baseline.rmse >= std::fabs(a.baseline.bias));
  CHECK((a.baseline.coverage >= 0.0 && a.baseline.coverage <= 100.0));
  REQUIRE(a.exceedance.size() == exceedance_x_values().size() * exceedance_levels().size());
  for (const auto& e : a.exceedance) {
    CHECK(e.truth == doctest::Approx(1.0 - e.level).epsilon(1e-9));
    CHECK(true_conditional(sc, e.x).cdf(e.y0) == doctest::Approx(e.level).epsilon(1e-9));
    CHECK(e.stats.rmse >= std::fabs(e.stats.bias));
  }
  REQUIRE(a.beta.size() == 2);
  for (std::size_t k = 0; k < a.bias.size(); ++k) REQUIRE(a.rmse[k] >= std::fabs(a.bias[k]) - 1e-15);
}
