#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <omp.h>

#include <cstring>
#include <random>
#include <vector>

#include "tiltcrm/kernels.hpp"
#include "tiltcrm/rng.hpp"

using namespace tiltcrm;

namespace {
const Support kUnit{0.0, 1.0};

DiscreteMeasure random_measure(Rng& rng, std::size_t k) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> loc(k), w(k);
  for (std::size_t i = 0; i < k; ++i) {
    loc[i] = u(rng);
    w[i] = e(rng);
  }
  return DiscreteMeasure(loc, w, kUnit);
}

std::vector<double> uniform_vec(Rng& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <class T>
bool same_bits(const std::vector<T>& a, const std::vector<T>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

struct Threads {
  explicit Threads(int k) : saved(omp_get_max_threads()) { omp_set_num_threads(k); }
  ~Threads() { omp_set_num_threads(saved); }
  int saved;
};
}  // namespace

TEST_CASE("psi and exponentials match bitwise") {
  Threads t(4);
  Rng rng = make_rng(11, 0);
  for (std::size_t n : {1u, 63u, 64u, 500u}) {
    const auto u = uniform_vec(rng, n, 0.0, 3.0);
    const auto theta = uniform_vec(rng, n, -20.0, 20.0);
    const auto pts = uniform_vec(rng, 300, 0.0, 1.0);
    std::vector<double> a(pts.size()), b(pts.size());
    kernels::serial::psi_at(u, theta, pts, a);
    kernels::parallel::psi_at(u, theta, pts, b);
    CHECK(same_bits(a, b));
    std::vector<double> ea(n * pts.size()), eb(n * pts.size());
    kernels::serial::tilt_exponentials(theta, pts, ea);
    kernels::parallel::tilt_exponentials(theta, pts, eb);
    CHECK(same_bits(ea, eb));
  }
}

TEST_CASE("theta solve and log-normalizer match bitwise") {
  Threads t(3);
  Rng rng = make_rng(12, 0);
  const auto mu = random_measure(rng, 40);
  const std::size_t n = 777;
  auto lambda = uniform_vec(rng, n, mu.min_location() - 0.01, mu.max_location() + 0.01);
  const std::vector<double> guess(n, 0.0);
  std::vector<double> ta(n), tb(n);
  std::vector<kernels::SolveStatus> sa(n), sb(n);
  kernels::serial::solve_theta_batch(mu, lambda, guess, ta, sa);
  kernels::parallel::solve_theta_batch(mu, lambda, guess, tb, sb);
  CHECK(same_bits(sa, sb));
  bool any_out = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (sa[i] == kernels::SolveStatus::ok) {
      CHECK(std::memcmp(&ta[i], &tb[i], sizeof(double)) == 0);
    } else {
      any_out = true;
    }
  }
  CHECK(any_out);

  const auto theta = uniform_vec(rng, n, -50.0, 50.0);
  std::vector<double> la(n), lb(n);
  kernels::serial::log_norm_batch(mu, theta, la);
  kernels::parallel::log_norm_batch(mu, theta, lb);
  CHECK(same_bits(la, lb));
}

TEST_CASE("mixture rows match bitwise") {
  Threads t(4);
  Rng rng = make_rng(13, 0);
  std::vector<DiscreteMeasure> measures;
  for (int r = 0; r < 90; ++r) measures.push_back(random_measure(rng, 5 + r % 30));
  const auto tilts = uniform_vec(rng, measures.size(), -5.0, 5.0);
  std::vector<double> grid(201);
  for (std::size_t g = 0; g < grid.size(); ++g) grid[g] = -0.1 + 1.2 * double(g) / 200.0;
  std::vector<double> a(measures.size() * grid.size()), b(a.size());
  kernels::serial::mixture_density_rows(measures, tilts, 0.07, grid, a);
  kernels::parallel::mixture_density_rows(measures, tilts, 0.07, grid, b);
  CHECK(same_bits(a, b));
  kernels::serial::mixture_cdf_rows(measures, tilts, 0.07, grid, a);
  kernels::parallel::mixture_cdf_rows(measures, tilts, 0.07, grid, b);
  CHECK(same_bits(a, b));
}

TEST_CASE("thread count does not change results") {
  Rng rng = make_rng(14, 0);
  const auto mu = random_measure(rng, 25);
  const auto theta = uniform_vec(rng, 1000, -10.0, 10.0);
  std::vector<double> one(theta.size()), many(theta.size());
  {
    Threads t(1);
    kernels::parallel::log_norm_batch(mu, theta, one);
  }
  {
    Threads t(5);
    kernels::parallel::log_norm_batch(mu, theta, many);
  }
  CHECK(same_bits(one, many));
}
