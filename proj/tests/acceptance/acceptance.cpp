// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Usage: acceptance [criterion ...]   (default: all)

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "stats.hpp"
#include "tiltcrm/crm.hpp"
#include "tiltcrm/functionals.hpp"
#include "tiltcrm/mcmc.hpp"
#include "tiltcrm/simharness.hpp"
#include "tiltcrm/tilt.hpp"

using namespace tiltcrm;
namespace fs = std::filesystem;

namespace {

const Support kUnit{0.0, 1.0};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string printf_str(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

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

// 1. Total mass of truncated gamma-CRM draws against Gamma(1, 1).
Outcome crm_law() {
  const auto intensity = crm::LevyIntensity::gamma(1.0, BaseMeasure::uniform(0.0, 1.0));
  Rng rng = make_rng(101, 0);
  std::vector<double> mass;
  for (int r = 0; r < 3000; ++r) mass.push_back(crm::sample_crm(intensity, 2000, rng).measure.total_mass());
  const auto ks = teststats::ks_one_sample(mass, [](double x) { return 1.0 - std::exp(-x); });
  return {ks.p > 0.01, printf_str("KS D=%.4f p=%.3f over 3000 draws", ks.d, ks.p)};
}

// 2. u kernel at n = 1, theta = 0: u / (1 + u) ~ U(0, 1).
Outcome u_oracle() {
  Dataset d;
  d.x = Eigen::MatrixXd::Ones(1, 1);
  d.y = {0.5};
  d.covariate_names = {"x0"};
  mcmc::McmcConfig cfg;
  mcmc::Sampler s(d, cfg);
  mcmc::ModelState st;
  st.mu = DiscreteMeasure({0.3, 0.7}, {1.0, 1.0}, kUnit);
  st.beta = Eigen::VectorXd::Zero(1);
  st.z = {0};
  if (!s.derive(st.beta, st.mu, {}, st.lambda, st.theta)) return {false, "state derivation failed"};
  st.theta[0] = 0.0;
  st.log_norm = {tilt::log_norm_const(st.mu, 0.0)};
  st.u = {1.0};
  Rng rng = make_rng(102, 0);
  const int thin = 10;
  for (int it = 0; it < 1000; ++it) s.update_u(st, rng);
  std::vector<double> u;
  for (int r = 0; r < 5000; ++r) {
    for (int t = 0; t < thin; ++t) s.update_u(st, rng);
    u.push_back(st.u[0]);
  }
  const auto ks = teststats::ks_one_sample(u, [](double v) { return v / (1.0 + v); });
  return {ks.p > 0.01, printf_str("KS D=%.4f p=%.3f over 5000 draws (thin %d), acceptance %.2f",
                                  ks.d, ks.p, thin, s.diagnostics().u.rate())};
}

// 3. Product form of the mu acceptance ratio against the direct ratio.
Outcome ratio_consistency() {
  Rng rng = make_rng(103, 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> ex(1.0);
  const auto log_prior = [](const DiscreteMeasure& nu) {
    double s = 0.0;
    for (double w : nu.weights()) s += std::log(w) - w;
    return s;
  };
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t k = 1 + rep % 3;
    std::vector<double> shared(k);
    for (auto& v : shared) v = unif(rng);
    auto build = [&](std::size_t extra) {
      std::vector<double> loc(shared), w;
      for (std::size_t e = 0; e < extra; ++e) loc.push_back(unif(rng));
      for (std::size_t l = 0; l < loc.size(); ++l) w.push_back(ex(rng));
      return DiscreteMeasure(loc, w, kUnit);
    };
    const DiscreteMeasure mu = build(2 + rep % 4), mu_star = build(1 + rep % 5);
    const std::size_t n = 1 + rep % 6;
    std::vector<double> z(n), th(n), th_star(n);
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = shared[i % k];
      th[i] = 10.0 * unif(rng) - 5.0;
      th_star[i] = 10.0 * unif(rng) - 5.0;
    }
    const double a = mcmc::mu_log_ratio(mu, mu_star, th, th_star, z);
    const double b = mcmc::mu_log_ratio_direct(mu, mu_star, th, th_star, z, log_prior);
    worst = std::max(worst, std::fabs(a - b));
  }
  return {worst < 1e-8, printf_str("max |product - direct| = %.2e over 100 states", worst)};
}

// 4. Zero-data chain against stick-breaking draws of DP(1, U(0, 1)).
Outcome prior_reproduction() {
  Dataset d;
  d.x = Eigen::MatrixXd(0, 1);
  d.covariate_names = {"x0"};
  mcmc::McmcConfig cfg;
  cfg.n_iter = 4100;
  cfg.burn_in = 100;
  cfg.thin = 1;
  cfg.m0.kind = mcmc::M0Policy::Kind::none;
  cfg.seed = 104;
  const auto draws = mcmc::run_chain(d, cfg);

  Rng rng = make_rng(104, 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::vector<double> ts{0.25, 0.5, 0.75};
  std::vector<std::vector<double>> oracle(ts.size()), chain(ts.size());
  for (int r = 0; r < 20000; ++r) {
    std::vector<double> F(ts.size(), 0.0);
    double left = 1.0;
    while (left > 1e-12) {
      const double w = left * unif(rng);  // Beta(1, 1) stick
      left -= w;
      const double loc = unif(rng);
      for (std::size_t k = 0; k < ts.size(); ++k)
        if (loc <= ts[k]) F[k] += w;
    }
    for (std::size_t k = 0; k < ts.size(); ++k) oracle[k].push_back(F[k]);
  }
  for (const auto& m : draws.baseline)
    for (std::size_t k = 0; k < ts.size(); ++k) {
      double acc = 0.0;
      for (std::size_t l = 0; l < m.size(); ++l)
        if (m.location(l) <= ts[k]) acc += m.weight(l);
      chain[k].push_back(acc);
    }
  bool ok = true;
  std::string detail;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const double se = std::hypot(teststats::batch_se(chain[k]), teststats::se(oracle[k]));
    const double diff = teststats::mean(chain[k]) - teststats::mean(oracle[k]);
    ok = ok && std::fabs(diff) < 3.0 * se;
    detail += printf_str("F(%.2f): chain %.4f oracle %.4f (%.1f SE); ", ts[k],
                         teststats::mean(chain[k]), teststats::mean(oracle[k]),
                         std::fabs(diff) / se);
  }
  return {ok, detail};
}

const sim::ExceedanceRow* find_exceedance(const sim::MetricsReport& r, double x, double level) {
  for (const auto& e : r.exceedance)
    if (std::fabs(e.x - x) < 1e-12 && std::fabs(e.level - level) < 1e-12) return &e;
  return nullptr;
}

// 5. Operating characteristics of the regression scenario at n = 50 and 250.
Outcome operating_characteristics() {
  const mcmc::McmcConfig cfg;  // 2000 / 1000 / 4
  const auto small = sim::run_study(sim::Scenario::regression(50, 50), cfg, 105);
  const auto large = sim::run_study(sim::Scenario::regression(250, 50), cfg, 105);
  const auto* e_small = find_exceedance(small, 0.5, 0.5);
  const auto* e_large = find_exceedance(large, 0.5, 0.5);
  if (small.failed || large.failed || !e_small || !e_large) return {false, "study failed"};

  auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  const bool a = in(small.baseline.coverage, 85, 97) && in(large.baseline.coverage, 85, 97);
  const bool b = std::fabs(large.baseline.bias) < 0.01;
  const bool c = large.median_ks < small.median_ks && large.median_tv < small.median_tv &&
                 large.median_w1 < small.median_w1;
  const bool d = in(e_small->stats.coverage, 85, 98) && in(e_large->stats.coverage, 85, 98);
  const std::string detail = printf_str(
      "(a) coverage %.1f / %.1f %s; (b) bias %.4f %s; (c) KS %.4f>%.4f TV %.4f>%.4f "
      "W1 %.4f>%.4f %s; (d) exceedance coverage %.1f / %.1f %s; failures %d / %d",
      small.baseline.coverage, large.baseline.coverage, a ? "ok" : "FAIL", large.baseline.bias,
      b ? "ok" : "FAIL", small.median_ks, large.median_ks, small.median_tv, large.median_tv,
      small.median_w1, large.median_w1, c ? "ok" : "FAIL", e_small->stats.coverage,
      e_large->stats.coverage, d ? "ok" : "FAIL", small.failures, large.failures);
  return {a && b && c && d, detail};
}

// 6. Slope inference under the null scenario.
Outcome beta_inference() {
  const mcmc::McmcConfig cfg;
  const auto r = sim::run_study(sim::Scenario::null_case(100, 50), cfg, 106);
  if (r.failed || r.beta.size() < 2) return {false, "study failed"};
  const auto& b1 = r.beta[1];
  const bool ok = b1.coverage >= 88 && b1.coverage <= 99 && std::fabs(b1.bias) < 0.03;
  return {ok, printf_str("beta1 coverage %.1f, bias %.4f, CI length %.3f, failures %d",
                         b1.coverage, b1.bias, b1.ci_length, r.failures)};
}

// b(theta + h) - b(theta) = h z0 + K(h), K(h) = log sum p_l e^{h (z_l - z0)}, with p the
// tilted weights and z0 the heaviest atom, in long double. Differencing K alone
// (the linear part is exact) avoids cancellation when one atom dominates.
class BStep {
 public:
  BStep(const DiscreteMeasure& mu, long double theta) {
    long double top = -1e300L;
    for (std::size_t l = 0; l < mu.size(); ++l)
      top = std::max(top, theta * mu.location(l) + std::log((long double)mu.weight(l)));
    long double s = 0.0L;
    for (std::size_t l = 0; l < mu.size(); ++l) {
      p_.push_back(std::exp(theta * mu.location(l) + std::log((long double)mu.weight(l)) - top));
      z_.push_back(mu.location(l));
      s += p_.back();
    }
    std::size_t heavy = 0;
    for (std::size_t l = 0; l < p_.size(); ++l) {
      p_[l] /= s;
      if (p_[l] > p_[heavy]) heavy = l;
    }
    z0_ = z_[heavy];
  }
  long double z0() const { return z0_; }
  long double excess(long double h) const {
    long double s = 0.0L;
    for (std::size_t l = 0; l < p_.size(); ++l) s += p_[l] * std::expm1(h * (z_[l] - z0_));
    return std::log1p(s);
  }

 private:
  std::vector<long double> p_, z_;
  long double z0_ = 0.0L;
};

// 7. Derivatives of b, tilt invariance, CDF / quantile round trips.
Outcome numerical_identities() {
  Rng rng = make_rng(107, 0);
  double d_err = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto mu = random_measure(rng, 2 + rep % 30);
    for (double theta : {-20.0, -3.0, -0.5, 0.0, 0.7, 4.0, 25.0}) {
      const BStep step(mu, theta);
      auto d1 = [&](long double h) {
        return step.z0() + (step.excess(h) - step.excess(-h)) / (2 * h);
      };
      auto d2 = [&](long double h) { return (step.excess(h) + step.excess(-h)) / (h * h); };
      const long double h = 1e-3L;
      const double fd1 = double((4 * d1(h / 2) - d1(h)) / 3);
      const double fd2 = double((4 * d2(h / 2) - d2(h)) / 3);
      const auto m = tilt::tilted_moments(mu, theta);
      d_err = std::max({d_err, std::fabs(m.mean - fd1) / std::fabs(fd1),
                        std::fabs(m.var - fd2) / std::fabs(fd2)});
    }
  }

  std::uniform_real_distribution<double> shift(-3.0, 3.0);
  double inv_err = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto mu = random_measure(rng, 8);
    const double c = shift(rng), theta = shift(rng);
    const auto wa = tilt::TiltedView(mu, theta).weights();
    const auto wb = tilt::TiltedView(tilt::retilt(mu, c), theta - c).weights();
    for (std::size_t l = 0; l < wa.size(); ++l) inv_err = std::max(inv_err, std::fabs(wa[l] - wb[l]));
  }

  double rt_err = 0.0;
  std::uniform_real_distribution<double> level(0.001, 0.999);
  for (int rep = 0; rep < 100; ++rep) {
    const auto mu = random_measure(rng, 1 + rep % 20).normalized();
    const double c = 0.02 + 0.2 * level(rng);
    for (int k = 0; k < 20; ++k) {
      const double p = level(rng);
      const double q = functionals::mixture_quantile(mu.locations(), mu.weights(), c, p);
      rt_err = std::max(rt_err, std::fabs(functionals::mixture_cdf(mu.locations(), mu.weights(), c, q) - p));
    }
  }
  const auto& base = sim::substitute_baseline();
  for (int k = 0; k < 2000; ++k) {
    const double p = level(rng);
    rt_err = std::max(rt_err, std::fabs(base.cdf(base.quantile(p)) - p));
  }
  const bool ok = d_err < 1e-6 && inv_err < 1e-12 && rt_err < 1e-9;
  return {ok, printf_str("b'/b'' rel err %.2e; invariance %.2e; round trip %.2e", d_err, inv_err,
                         rt_err)};
}

// 8. fit / predict / simulate reruns produce identical files.
std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int run(const std::string& args) {
  const std::string cmd = std::string(TILTCRM_BIN) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Empty string when the two directories hold the same files with the same bytes.
std::string compare_dirs(const fs::path& a, const fs::path& b, int& files) {
  std::set<std::string> na, nb;
  for (const auto& e : fs::directory_iterator(a)) na.insert(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(b)) nb.insert(e.path().filename().string());
  if (na != nb) return "file sets differ in " + a.filename().string();
  for (const auto& f : na) {
    ++files;
    if (read_file(a / f) != read_file(b / f)) return f + " differs";
  }
  return "";
}

Outcome determinism() {
  const fs::path dir = fs::path(TILTCRM_ACCEPT_WORKDIR) / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    Rng rng = make_rng(108, 0);
    const Dataset d = sim::generate_replicate(sim::Scenario::regression(100, 1), rng);
    std::ofstream out(dir / "data.csv");
    out << "x,y\n";
    for (std::size_t i = 0; i < d.n(); ++i)
      out << printf_str("%.17g,%.17g\n", d.x(Eigen::Index(i), 1), d.y[i]);
    std::ofstream(dir / "x.csv") << "x\n-0.5\n0\n0.5\n";
    std::ofstream(dir / "fit.json") << R"({"covariates": ["x"], "mcmc": {"seed": 8}})";
    std::ofstream(dir / "sim.json")
        << R"({"mcmc": {"n_iter": 400, "burn_in": 200, "thin": 4, "seed": 8},
               "simulate": {"scenarios": ["null", "regression"], "n": [40], "replicates": 3}})";
  }
  const std::string fit = "fit --data " + (dir / "data.csv").string() + " --config " +
                          (dir / "fit.json").string() + " --out ";
  const std::string predict = "predict --draws " + (dir / "fit1").string() + " --x " +
                              (dir / "x.csv").string() +
                              " --quantiles 0.05,0.5,0.95 --exceed 0.25,0.5 --out ";
  const std::string simulate = "simulate --config " + (dir / "sim.json").string() + " --out ";
  for (const auto& cmd : {fit + (dir / "fit1").string(), fit + (dir / "fit2").string(),
                          predict + (dir / "pred1").string(), predict + (dir / "pred2").string(),
                          simulate + (dir / "sim1").string(), simulate + (dir / "sim2").string()})
    if (const int code = run(cmd); code != 0) return {false, printf_str("command exited %d", code)};
  int files = 0;
  for (const auto& [a, b] : {std::pair{"fit1", "fit2"}, {"pred1", "pred2"}, {"sim1", "sim2"}})
    if (auto why = compare_dirs(dir / a, dir / b, files); !why.empty()) return {false, why};
  return {files > 0, printf_str("%d output files identical across fit, predict, simulate", files)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "CRM law", crm_law},
      {2, "auxiliary-variable oracle", u_oracle},
      {3, "mu ratio consistency", ratio_consistency},
      {4, "prior reproduction", prior_reproduction},
      {5, "operating characteristics", operating_characteristics},
      {6, "beta inference", beta_inference},
      {7, "numerical identities", numerical_identities},
      {8, "determinism", determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
