#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <boost/math/special_functions/expint.hpp>

#include <cmath>
#include <random>

#include "stats.hpp"
#include "tiltcrm/crm.hpp"
#include "tiltcrm/errors.hpp"
#include "tiltcrm/special.hpp"

using namespace tiltcrm;
using namespace tiltcrm::crm;

namespace {
const BaseMeasure kUnit = BaseMeasure::uniform(0.0, 1.0);

double total_mass(const CrmDraw& d) { return d.measure.total_mass(); }
}  // namespace

TEST_CASE("E1 agrees with the boost oracle across the series / fraction switch") {
  for (double x = 1e-8; x < 700.0; x *= 1.37) {
    const double ref = boost::math::expint(1, x);
    CHECK(expint_e1(x) == doctest::Approx(ref).epsilon(1e-13));
  }
  CHECK(expint_e1(1.0) == doctest::Approx(0.21938393439552027).epsilon(1e-14));
  CHECK(expint_e1(std::nextafter(1.0, 0.0)) == doctest::Approx(expint_e1(1.0)).epsilon(1e-13));
  CHECK(std::isnan(expint_e1(0.0)));
  CHECK(expint_e1(800.0) == 0.0);
}

TEST_CASE("tail mass of the gamma intensity") {
  const auto g1 = LevyIntensity::gamma(1.0, kUnit);
  const auto g2 = LevyIntensity::gamma(2.0, kUnit);
  CHECK(tail_mass(50.0, g1) < 1e-20);
  CHECK(tail_mass(1.0, g1) == doctest::Approx(0.21938393439552027).epsilon(1e-13));
  for (double v : {1e-5, 0.3, 1.0, 4.0})
    CHECK(tail_mass(v, g2) == doctest::Approx(2.0 * tail_mass(v, g1)).epsilon(1e-14));
  double prev = tail_mass(1e-6, g1);
  for (double v = 2e-6; v < 40.0; v *= 1.5) {
    const double cur = tail_mass(v, g1);
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("posterior tail mass reduces to the gamma form when psi vanishes") {
  const auto g = LevyIntensity::gamma(1.5, kUnit);
  const auto p = LevyIntensity::posterior_tilted(1.5, kUnit, QuadratureGrid(kUnit),
                                                 std::vector<double>(256, 0.0));
  for (double v : {1e-4, 0.1, 1.0, 3.0}) CHECK(tail_mass(v, p) == doctest::Approx(tail_mass(v, g)));
}

TEST_CASE("posterior tail mass matches direct quadrature of E1(v(1 + psi))") {
  const TiltSum psi{{0.7, 2.0}, {1.5, -3.0}};
  const auto I = LevyIntensity::posterior_tilted(1.0, kUnit, psi);
  const QuadratureGrid grid(kUnit);
  for (double v : {0.01, 0.5, 2.0}) {
    double ref = 0.0;
    for (std::size_t j = 0; j < grid.size(); ++j)
      ref += grid.weight(j) * boost::math::expint(1, v * (1.0 + psi(grid.node(j))));
    CHECK(tail_mass(v, I) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("invert_tail round trips and is monotone") {
  const auto g = LevyIntensity::gamma(1.0, kUnit);
  const auto p = LevyIntensity::posterior_tilted(1.0, kUnit, TiltSum{{0.5}, {2.0}});
  for (const auto* I : {&g, &p}) {
    CHECK(invert_tail(tail_mass(0.5, *I), *I) == doctest::Approx(0.5).epsilon(1e-8));
    for (double s = 1e-10; s < 30.0; s *= 3.1) {
      const double xi = tail_mass(s, *I);
      const double back = invert_tail(xi, *I);
      CHECK(std::fabs(tail_mass(back, *I) - xi) <= 1e-9 * xi);
    }
    double prev = invert_tail(0.01, *I);
    for (double xi = 0.02; xi < 30.0; xi *= 1.8) {
      const double s = invert_tail(xi, *I);
      CHECK(s < prev);
      prev = s;
    }
  }
  CHECK(invert_tail(expint_e1(1.0), g) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("invert_tail reports underflow for an astronomically large epoch") {
  const auto g = LevyIntensity::gamma(1.0, kUnit);
  CHECK_THROWS_AS(invert_tail(1e6, g), TruncationUnderflow);
}

TEST_CASE("Ferguson-Klass weights are strictly decreasing") {
  Rng rng(11);
  const auto g = LevyIntensity::gamma(1.0, kUnit);
  const auto p = LevyIntensity::posterior_tilted(1.0, kUnit, TiltSum{{1.0, 0.3}, {2.0, -1.0}});
  for (int rep = 0; rep < 50; ++rep) {
    for (const auto* I : {&g, &p}) {
      const auto d = sample_crm(*I, 200, rng);
      REQUIRE(d.measure.size() >= 1);
      for (std::size_t i = 1; i < d.measure.size(); ++i)
        CHECK(d.measure.weight(i) < d.measure.weight(i - 1));
    }
  }
}

TEST_CASE("the weight floor stops the series early and H caps it") {
  Rng rng(3);
  const auto g = LevyIntensity::gamma(1.0, kUnit);
  const auto small = sample_crm(g, 5, rng);
  CHECK(small.measure.size() == 5);
  const auto big = sample_crm(g, 2000, rng);
  CHECK(big.floor_reached);
  CHECK(big.measure.size() < 2000);
  const double last = big.measure.weight(big.measure.size() - 1);
  CHECK(last >= 1e-12 * (big.measure.total_mass() - last));
}

TEST_CASE("gamma CRM total mass follows Gamma(alpha, 1)") {
  Rng rng(2024);
  const auto g = LevyIntensity::gamma(1.0, kUnit);
  std::vector<double> mass;
  for (int r = 0; r < 1000; ++r) mass.push_back(total_mass(sample_crm(g, 200, rng)));
  const auto ks = teststats::ks_one_sample(mass, [](double x) { return 1.0 - std::exp(-x); });
  CHECK(ks.p > 0.01);
}

TEST_CASE("KS distance to Gamma(1,1) shrinks as H grows") {
  const auto g = LevyIntensity::gamma(1.0, kUnit);
  auto ks_at = [&](std::size_t H) {
    Rng rng(77);
    std::vector<double> mass;
    for (int r = 0; r < 1500; ++r) mass.push_back(total_mass(sample_crm(g, H, rng)));
    return teststats::ks_one_sample(mass, [](double x) { return 1.0 - std::exp(-x); }).d;
  };
  const double d1 = ks_at(1), d3 = ks_at(3), d50 = ks_at(50), d200 = ks_at(200),
               d2000 = ks_at(2000);
  CHECK(d1 > d3);
  CHECK(d3 > d50);
  // The relative weight floor is reached well before 50 atoms at alpha = 1,
  // so larger H reproduces the same series.
  CHECK(d200 <= d50);
  CHECK(d2000 <= d200);
}

TEST_CASE("normalized gamma CRM cell probabilities have Dirichlet means") {
  Rng rng(99);
  const auto g = LevyIntensity::gamma(1.0, kUnit);
  const int R = 2000;
  std::vector<std::vector<double>> cells(10);
  for (int r = 0; r < R; ++r) {
    const auto d = sample_crm(g, 200, rng);
    std::vector<double> p(10, 0.0);
    for (std::size_t l = 0; l < d.measure.size(); ++l)
      p[std::min<std::size_t>(9, std::size_t(d.measure.location(l) * 10.0))] +=
          d.measure.weight(l) / d.measure.total_mass();
    for (int k = 0; k < 10; ++k) cells[std::size_t(k)].push_back(p[std::size_t(k)]);
  }
  // Dir(alpha/10, ...) with alpha = 1: mean 0.1, variance 0.1 * 0.9 / 2.
  const double se = std::sqrt(0.09 / 2.0 / R);
  for (const auto& c : cells) CHECK(std::fabs(teststats::mean(c) - 0.1) < 3.0 * se);
}

TEST_CASE("posterior intensity with psi = 0 places atoms according to G0") {
  Rng rng(5);
  const auto p = LevyIntensity::posterior_tilted(1.0, kUnit, QuadratureGrid(kUnit),
                                                 std::vector<double>(256, 0.0));
  std::vector<double> loc, ref;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int r = 0; r < 200; ++r) {
    const auto d = sample_crm(p, 200, rng);
    for (std::size_t l = 0; l < d.measure.size(); ++l) loc.push_back(d.measure.location(l));
  }
  for (std::size_t k = 0; k < loc.size(); ++k) ref.push_back(unif(rng));
  CHECK(teststats::ks_two_sample(loc, ref).p > 0.01);
}

TEST_CASE("posterior locations given s follow exp(-s psi(z)) g0(z)") {
  // psi(z) = 3 e^{2z}; pool the largest atom, whose s is large, against a grid oracle.
  const TiltSum psi{{3.0}, {2.0}};
  const auto p = LevyIntensity::posterior_tilted(1.0, kUnit, psi);
  Rng rng(8);
  std::vector<double> top, s_top;
  for (int r = 0; r < 3000; ++r) {
    const auto d = sample_crm(p, 1, rng);
    top.push_back(d.measure.location(0));
    s_top.push_back(d.measure.weight(0));
  }
  // Mixture over s of the conditional laws: compare E[z] with the average
  // conditional mean computed by fine quadrature.
  double oracle = 0.0;
  for (double s : s_top) {
    double num = 0.0, den = 0.0;
    for (int k = 0; k < 4096; ++k) {
      const double z = (k + 0.5) / 4096.0;
      const double w = std::exp(-s * psi(z));
      num += z * w;
      den += w;
    }
    oracle += num / den;
  }
  oracle /= double(s_top.size());
  CHECK(std::fabs(teststats::mean(top) - oracle) < 4.0 * teststats::se(top));
}

TEST_CASE("fixed posterior atoms have Gamma(n*, psi + 1) weights") {
  Rng rng(31);
  const auto I = LevyIntensity::posterior_tilted(1.0, kUnit, QuadratureGrid(kUnit),
                                                 std::vector<double>(256, 1.0));
  const std::vector<double> loc{0.4};
  const std::vector<int> mult{3};
  const std::vector<double> psi{1.0};
  std::vector<double> J;
  for (int r = 0; r < 10000; ++r) {
    const auto d = sample_posterior_crm(I, FixedAtoms{loc, mult, psi}, 20, rng);
    CHECK(d.fixed_count == 1);
    CHECK(d.measure.location(0) == 0.4);
    J.push_back(d.measure.weight(0));
  }
  const double sigma = std::sqrt(3.0) / 2.0;
  CHECK(std::fabs(teststats::mean(J) - 1.5) < 3.0 * sigma / 100.0);
}

TEST_CASE("posterior CRM with no data is a plain gamma CRM draw") {
  Rng a(42), b(42);
  const auto d1 = sample_posterior_crm({}, {}, {}, {}, 1.0, kUnit, 200, a);
  const auto d2 = sample_crm(LevyIntensity::gamma(1.0, kUnit), 200, b);
  REQUIRE(d1.measure.size() == d2.measure.size());
  for (std::size_t l = 0; l < d1.measure.size(); ++l) {
    CHECK(d1.measure.location(l) == d2.measure.location(l));
    CHECK(d1.measure.weight(l) == d2.measure.weight(l));
  }
}

TEST_CASE("a huge auxiliary variable drives the fixed-atom weight to zero") {
  Rng rng(4);
  const std::vector<double> u{1e8}, theta{0.0}, z{0.5};
  const std::vector<int> n{3};
  std::vector<double> J;
  for (int r = 0; r < 2000; ++r)
    J.push_back(sample_posterior_crm(u, theta, z, n, 1.0, kUnit, 50, rng).measure.weight(0));
  const double expected = 3.0 / (1e8 + 1.0);
  CHECK(teststats::mean(J) == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("discrete measure validation") {
  const Support s{0.0, 1.0};
  CHECK_THROWS(DiscreteMeasure({}, {}, s));
  CHECK_THROWS(DiscreteMeasure({0.5}, {0.0}, s));
  CHECK_THROWS(DiscreteMeasure({1.5}, {1.0}, s));
  const DiscreteMeasure m({0.2, 0.8}, {1.0, 3.0}, s);
  CHECK(m.total_mass() == 4.0);
  CHECK(m.normalized().weight(1) == 0.75);
}
