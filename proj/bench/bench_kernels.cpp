// Serial reference kernels against their OpenMP versions.
// Run with OMP_NUM_THREADS set to the thread count of interest.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "tiltcrm/kernels.hpp"
#include "tiltcrm/rng.hpp"

using namespace tiltcrm;
namespace k = tiltcrm::kernels;

namespace {

std::vector<double> uniform(std::size_t n, double lo, double hi, std::uint64_t stream) {
  Rng rng = make_rng(9, stream);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

DiscreteMeasure measure(std::size_t atoms, std::uint64_t stream) {
  auto loc = uniform(atoms, 0.0, 1.0, stream);
  auto w = uniform(atoms, 0.01, 1.0, stream + 1);
  return DiscreteMeasure(loc, w, {0.0, 1.0});
}

template <auto Kernel>
void psi_at(benchmark::State& st) {
  const auto n = std::size_t(st.range(0));
  const auto u = uniform(n, 0.1, 3.0, 1), theta = uniform(n, -5.0, 5.0, 2);
  const auto pts = uniform(256, 0.0, 1.0, 3);
  std::vector<double> out(pts.size());
  for (auto _ : st) {
    Kernel(u, theta, pts, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Kernel>
void solve_theta(benchmark::State& st) {
  const auto n = std::size_t(st.range(0));
  const auto mu = measure(200, 4);
  const auto lambda = uniform(n, 0.2, 0.8, 6);
  const std::vector<double> guess(n, 0.0);
  std::vector<double> theta(n);
  std::vector<k::SolveStatus> status(n);
  for (auto _ : st) {
    Kernel(mu, lambda, guess, theta, status);
    benchmark::DoNotOptimize(theta.data());
  }
}

template <auto Kernel>
void density_rows(benchmark::State& st) {
  const auto rows = std::size_t(st.range(0));
  std::vector<DiscreteMeasure> ms;
  for (std::size_t r = 0; r < rows; ++r) ms.push_back(measure(200, 10 + 2 * r));
  const auto tilts = uniform(rows, -2.0, 2.0, 7);
  std::vector<double> grid(512);
  for (std::size_t g = 0; g < grid.size(); ++g) grid[g] = double(g) / 511.0;
  std::vector<double> out(rows * grid.size());
  for (auto _ : st) {
    Kernel(ms, tilts, 0.05, grid, out);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(psi_at<k::serial::psi_at>)->Name("psi_at/serial")->Arg(250)->Arg(2000);
BENCHMARK(psi_at<k::parallel::psi_at>)->Name("psi_at/parallel")->Arg(250)->Arg(2000);
BENCHMARK(solve_theta<k::serial::solve_theta_batch>)->Name("solve_theta/serial")->Arg(250)->Arg(2000);
BENCHMARK(solve_theta<k::parallel::solve_theta_batch>)->Name("solve_theta/parallel")->Arg(250)->Arg(2000);
BENCHMARK(density_rows<k::serial::mixture_density_rows>)->Name("density_rows/serial")->Arg(250);
BENCHMARK(density_rows<k::parallel::mixture_density_rows>)->Name("density_rows/parallel")->Arg(250);

BENCHMARK_MAIN();
