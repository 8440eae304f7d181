#include "tiltcrm/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "tiltcrm/errors.hpp"
#include "tiltcrm/kernels.hpp"
#include "tiltcrm/log.hpp"

namespace tiltcrm::mcmc {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr int kAdaptWindow = 50;
constexpr double kTargetUAcceptance = 0.3;

double logit_window_shift(double theta, double zmin, double zmax) {
  return theta > 0.0 ? theta * zmax : theta * zmin;
}

}  // namespace

void McmcConfig::validate() const {
  if (n_iter < 1 || burn_in < 0 || thin < 1) throw ConfigError("mcmc: n_iter, thin must be >= 1");
  if (burn_in >= n_iter) throw ConfigError("mcmc: burn_in must be smaller than n_iter");
  if (H < 1) throw ConfigError("mcmc: truncation H must be >= 1");
  if (!(delta >= 1.0)) throw ConfigError("mcmc: delta must be >= 1");
  if (!(kernel_halfwidth_factor > 0.0)) throw ConfigError("mcmc: kernel_halfwidth_factor must be > 0");
  if (!(prior.alpha > 0.0)) throw ConfigError("mcmc: alpha must be > 0");
  if (!(prior.support.hi > prior.support.lo)) throw ConfigError("mcmc: support must have lo < hi");
  if (m0.kind == M0Policy::Kind::fixed && !prior.support.contains_open(m0.value))
    throw ConfigError("mcmc: fixed m0 must lie inside the support");
}

Kernel::Kernel(double halfwidth) : c_(halfwidth) {
  if (!(halfwidth > 0.0) || !std::isfinite(halfwidth))
    throw ConfigError("kernel half-width must be positive");
}

Kernel Kernel::silverman(std::span<const double> y, double factor) {
  const std::size_t n = y.size();
  if (n < 2) throw DataError("Silverman bandwidth needs at least two responses");
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / double(n);
  double ss = 0.0;
  for (double v : y) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / double(n - 1));
  if (!(sd > 0.0)) throw DataError("Silverman bandwidth: responses have zero spread");
  return Kernel(factor * 1.06 * sd * std::pow(double(n), -0.2));
}

double Kernel::cdf(double y, double z) const {
  return std::clamp((y - (z - c_)) / (2.0 * c_), 0.0, 1.0);
}

std::vector<double> ModelState::z_locations() const {
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = mu.location(z[i]);
  return out;
}

Clusters cluster_latents(std::span<const std::size_t> z) {
  std::vector<std::size_t> sorted(z.begin(), z.end());
  std::sort(sorted.begin(), sorted.end());
  Clusters c;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i == 0 || sorted[i] != sorted[i - 1]) {
      c.atoms.push_back(sorted[i]);
      c.counts.push_back(1);
    } else {
      ++c.counts.back();
    }
  }
  return c;
}

double log_post_u(std::span<const double> u, std::span<const double> theta,
                  std::span<const double> z, double alpha, const QuadratureGrid& g0) {
  double integral = 0.0;
  for (std::size_t j = 0; j < g0.size(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * std::exp(theta[i] * g0.node(j));
    integral += g0.weight(j) * std::log1p(s);
  }
  double atoms = 0.0;
  for (double zj : z) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * std::exp(theta[i] * zj);
    atoms += std::log1p(s);
  }
  return -alpha * integral - atoms;
}

double gamma_walk_log_correction(double u, double u_new, double delta) {
  // q(b | a) = Gamma(b; shape delta, rate delta / a)
  return (2.0 * delta - 1.0) * (std::log(u) - std::log(u_new)) + delta * (u_new / u - u / u_new);
}

double atom_weight_at(const DiscreteMeasure& mu, double z) {
  for (std::size_t l = 0; l < mu.size(); ++l)
    if (mu.location(l) == z) return mu.weight(l);
  std::ostringstream os;
  os << "no atom at location " << z;
  throw NumericalError(os.str());
}

double mu_log_ratio(const DiscreteMeasure& mu, const DiscreteMeasure& mu_star,
                    std::span<const double> theta, std::span<const double> theta_star,
                    std::span<const double> z) {
  double log_r = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    log_r += 2.0 * (theta_star[i] - theta[i]) * z[i] -
             tilt::log_norm_const(mu_star, theta_star[i]) + tilt::log_norm_const(mu, theta[i]) -
             tilt::log_norm_const(mu, theta_star[i]) + tilt::log_norm_const(mu_star, theta[i]);
  }
  return log_r;
}

double mu_log_ratio_augmented(const DiscreteMeasure& mu, const DiscreteMeasure& mu_star,
                              std::span<const double> theta, std::span<const double> theta_star,
                              std::span<const double> z, std::span<const double> u,
                              double log_c, double log_c_star) {
  double log_r = log_c - log_c_star;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double lu = std::log(u[i]);
    log_r += (theta_star[i] - theta[i]) * z[i] -
             std::exp(lu + tilt::log_norm_const(mu_star, theta_star[i])) +
             std::exp(lu + tilt::log_norm_const(mu, theta[i])) -
             std::exp(lu + tilt::log_norm_const(mu, theta_star[i])) +
             std::exp(lu + tilt::log_norm_const(mu_star, theta[i]));
  }
  return log_r;
}

double mu_log_ratio_direct(const DiscreteMeasure& mu, const DiscreteMeasure& mu_star,
                           std::span<const double> theta, std::span<const double> theta_star,
                           std::span<const double> z,
                           const std::function<double(const DiscreteMeasure&)>& log_prior) {
  // log pi(nu) with nu's own derived tilts; log q(nu | rho) tilts nu by rho's.
  auto log_target = [&](const DiscreteMeasure& nu, std::span<const double> th) {
    double s = log_prior(nu);
    for (std::size_t i = 0; i < z.size(); ++i)
      s += th[i] * z[i] - tilt::log_norm_const(nu, th[i]) + std::log(atom_weight_at(nu, z[i]));
    return s;
  };
  const double pi_star = log_target(mu_star, theta_star);
  const double pi_cur = log_target(mu, theta);
  const double q_cur_given_star = log_target(mu, theta_star);
  const double q_star_given_cur = log_target(mu_star, theta);
  return pi_star + q_cur_given_star - pi_cur - q_star_given_cur;
}

Sampler::Sampler(const Dataset& data, const McmcConfig& config)
    : data_(&data),
      config_(config),
      base_(BaseMeasure::uniform(config.prior.support.lo, config.prior.support.hi)),
      grid_(base_),
      kernel_(config.kernel_halfwidth > 0.0
                  ? Kernel(config.kernel_halfwidth)
                  : (data.n() >= 2 ? Kernel::silverman(data.y, config.kernel_halfwidth_factor)
                                   : Kernel(0.05 * config.prior.support.width()))),
      link_(config.prior.support),
      delta_(config.delta) {
  config_.validate();
  const auto p = static_cast<Eigen::Index>(data.p());
  prior_mean_ = config.prior.beta_mean.size() == p ? config.prior.beta_mean
                                                   : Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd cov = config.prior.beta_cov.rows() == p && config.prior.beta_cov.cols() == p
                            ? config.prior.beta_cov
                            : Eigen::MatrixXd(Eigen::MatrixXd::Identity(p, p) *
                                              config.prior.prior_variance);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw ConfigError("beta prior covariance is not positive definite");
  prior_precision_ = llt.solve(Eigen::MatrixXd::Identity(p, p));
  double logdet = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) logdet += 2.0 * std::log(llt.matrixL()(j, j));
  prior_log_const_ = -0.5 * (double(p) * kLog2Pi + logdet);
}

double Sampler::log_prior_beta(const Eigen::VectorXd& beta) const {
  const Eigen::VectorXd d = beta - prior_mean_;
  return prior_log_const_ - 0.5 * d.dot(prior_precision_ * d);
}

bool Sampler::derive(const Eigen::VectorXd& beta, const DiscreteMeasure& mu,
                     std::span<const double> guess, std::vector<double>& lambda,
                     std::vector<double>& theta) const {
  const std::size_t n = data_->n();
  lambda.resize(n);
  theta.resize(n);
  if (n == 0) return true;
  const Eigen::VectorXd eta = data_->x * beta;
  for (std::size_t i = 0; i < n; ++i) {
    lambda[i] = link_.inverse(eta(static_cast<Eigen::Index>(i)));
    if (!(lambda[i] > mu.min_location() && lambda[i] < mu.max_location())) return false;
  }
  std::vector<kernels::SolveStatus> status(n);
  std::vector<double> g(guess.begin(), guess.end());
  if (g.size() != n) g.assign(n, 0.0);
  kernels::parallel::solve_theta_batch(mu, lambda, g, theta, status);
  return std::none_of(status.begin(), status.end(),
                      [](auto s) { return s != kernels::SolveStatus::ok; });
}

ModelState Sampler::initialize(Rng& rng) {
  ModelState state;
  state.beta = prior_mean_;
  const std::size_t n = data_->n();
  // Start mu at a posterior-CRM draw with an atom at every response (theta = 0,
  // u = 1), so each kernel window holds an atom and no large tilt is needed.
  // A bare prior draw can leave the chain stuck in a state it never leaves.
  bool ok = false;
  if (n > 0) {
    std::vector<double> loc(data_->y);
    std::sort(loc.begin(), loc.end());
    loc.erase(std::unique(loc.begin(), loc.end()), loc.end());
    std::vector<int> counts(loc.size(), 0);
    for (double y : data_->y)
      ++counts[std::lower_bound(loc.begin(), loc.end(), y) - loc.begin()];
    const auto intensity = crm::LevyIntensity::posterior_tilted(
        config_.prior.alpha, base_, grid_, std::vector<double>(grid_.size(), double(n)));
    std::vector<double> psi(loc.size(), double(n));
    state.mu = crm::sample_posterior_crm(intensity, crm::FixedAtoms{loc, counts, psi}, config_.H,
                                         rng)
                   .measure;
    ok = derive(state.beta, state.mu, {}, state.lambda, state.theta);
  }
  const auto prior = crm::LevyIntensity::gamma(config_.prior.alpha, base_);
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    state.mu = crm::sample_crm(prior, config_.H, rng).measure;
    ok = derive(state.beta, state.mu, {}, state.lambda, state.theta);
  }
  if (!ok) throw NumericalError("initialization: prior mean of beta unattainable under prior draws");

  std::vector<std::size_t> order(state.mu.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](auto a, auto b) { return state.mu.location(a) < state.mu.location(b); });
  std::vector<double> sorted(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) sorted[k] = state.mu.location(order[k]);

  state.z.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = data_->y[i];
    auto it = std::lower_bound(sorted.begin(), sorted.end(), y);
    std::size_t k = static_cast<std::size_t>(it - sorted.begin());
    if (k == sorted.size() || (k > 0 && y - sorted[k - 1] < sorted[k] - y)) --k;
    state.z[i] = order[k];
  }
  // Start beta at the conditional mode: the mode-centred independence proposal
  // can stall for a long time when the chain starts deep in the tail.
  if (auto mode = find_mode(state, state.beta, nullptr)) {
    std::vector<double> lambda, theta;
    if (derive(*mode, state.mu, state.theta, lambda, theta)) {
      state.beta = *mode;
      state.lambda = std::move(lambda);
      state.theta = std::move(theta);
    }
  }
  state.log_norm.resize(n);
  kernels::parallel::log_norm_batch(state.mu, state.theta, state.log_norm);
  state.u.resize(n);
  for (std::size_t i = 0; i < n; ++i) state.u[i] = std::exp(-state.log_norm[i]);
  psi_valid_ = false;
  last_mode_.reset();
  return state;
}

double Sampler::log_post_beta(const Eigen::VectorXd& beta, const ModelState& state) const {
  std::vector<double> lambda, theta;
  if (!derive(beta, state.mu, state.theta, lambda, theta))
    return -std::numeric_limits<double>::infinity();
  return log_post_beta_at(beta, state, theta);
}

double Sampler::log_post_beta_at(const Eigen::VectorXd& beta, const ModelState& state,
                                 std::span<const double> theta) const {
  double lp = log_prior_beta(beta);
  for (std::size_t i = 0; i < data_->n(); ++i) {
    const std::size_t a = state.z[i];
    lp += theta[i] * state.mu.location(a) - tilt::log_norm_const(state.mu, theta[i]) +
          std::log(state.mu.weight(a));
  }
  return lp;
}

std::optional<Eigen::MatrixXd> Sampler::fisher_information(const Eigen::VectorXd& beta,
                                                           const ModelState& state) const {
  std::vector<double> lambda, theta;
  if (!derive(beta, state.mu, state.theta, lambda, theta)) return std::nullopt;
  const auto p = static_cast<Eigen::Index>(data_->p());
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t i = 0; i < data_->n(); ++i) {
    const double v = tilt::tilted_var(state.mu, theta[i]);
    const double gp = link_.derivative(lambda[i]);
    const Eigen::VectorXd xi = data_->x.row(static_cast<Eigen::Index>(i)).transpose();
    info.noalias() += xi * xi.transpose() / (gp * gp * v);
  }
  return info;
}

namespace {

struct BetaEval {
  bool ok = false;
  double lp = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd info;  // Fisher + prior precision
  std::vector<double> lambda, theta, log_norm;
};

}  // namespace

std::optional<Eigen::VectorXd> Sampler::beta_mode(const ModelState& state,
                                                  const Eigen::VectorXd& start) const {
  return find_mode(state, start, nullptr);
}

std::optional<Eigen::VectorXd> Sampler::find_mode(const ModelState& state,
                                                  const Eigen::VectorXd& start,
                                                  Eigen::MatrixXd* info) const {
  const std::size_t n = data_->n();
  const auto p = static_cast<Eigen::Index>(data_->p());
  std::vector<double> guess = state.theta;

  auto evaluate = [&](const Eigen::VectorXd& beta, BetaEval& e) {
    e.ok = derive(beta, state.mu, guess, e.lambda, e.theta);
    if (!e.ok) return;
    e.lp = log_prior_beta(beta);
    e.grad = -prior_precision_ * (beta - prior_mean_);
    e.info = prior_precision_;
    e.log_norm.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const tilt::Moments m = tilt::tilted_moments(state.mu, e.theta[i]);
      const std::size_t a = state.z[i];
      const double z = state.mu.location(a);
      e.log_norm[i] = m.log_norm;
      e.lp += e.theta[i] * z - m.log_norm + std::log(state.mu.weight(a));
      const double gp = link_.derivative(e.lambda[i]);
      const double scale = 1.0 / (gp * m.var);
      const auto xi = data_->x.row(static_cast<Eigen::Index>(i)).transpose();
      e.grad.noalias() += xi * ((z - e.lambda[i]) * scale);
      e.info.noalias() += xi * xi.transpose() * (scale / gp);
    }
  };

  BetaEval cur;
  evaluate(start, cur);
  if (!cur.ok) return std::nullopt;
  Eigen::VectorXd beta = start;
  for (int it = 0; it < 100; ++it) {
    guess = cur.theta;
    const Eigen::VectorXd step = cur.info.ldlt().solve(cur.grad);
    if (!step.allFinite()) return std::nullopt;
    if (step.lpNorm<Eigen::Infinity>() < 1e-9 * (1.0 + beta.lpNorm<Eigen::Infinity>())) {
      if (info) *info = cur.info;
      return beta;
    }
    double t = 1.0;
    BetaEval next;
    Eigen::VectorXd candidate(p);
    for (; t > 1e-10; t *= 0.5) {
      candidate = beta + t * step;
      evaluate(candidate, next);
      if (next.ok && next.lp >= cur.lp - 1e-12 * (1.0 + std::fabs(cur.lp))) break;
    }
    if (!(t > 1e-10)) {  // no ascent direction left: stationary to precision
      if (info) *info = cur.info;
      return beta;
    }
    const bool small = (t * step).lpNorm<Eigen::Infinity>() <
                       1e-9 * (1.0 + beta.lpNorm<Eigen::Infinity>());
    beta = candidate;
    cur = std::move(next);
    if (small) {
      if (info) *info = cur.info;
      return beta;
    }
  }
  return std::nullopt;
}

bool Sampler::update_beta(ModelState& state, Rng& rng) {
  ++diag_.beta.proposed;
  psi_valid_ = false;
  Eigen::MatrixXd info;
  std::optional<Eigen::VectorXd> mode;
  if (last_mode_) mode = find_mode(state, *last_mode_, &info);
  if (!mode) mode = find_mode(state, state.beta, &info);
  if (!mode) {
    ++diag_.beta_forced_rejections;
    log::info("beta update: Newton did not converge; keeping current beta");
    return false;
  }
  last_mode_ = mode;

  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) {
    ++diag_.beta_forced_rejections;
    return false;
  }

  const auto p = static_cast<Eigen::Index>(data_->p());
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd proposal(p);
  std::vector<double> lambda, theta;
  bool inside = false;
  for (int attempt = 0; attempt < 100 && !inside; ++attempt) {
    Eigen::VectorXd xi(p);
    for (Eigen::Index j = 0; j < p; ++j) xi(j) = normal(rng);
    proposal = *mode + llt.matrixU().solve(xi);
    inside = derive(proposal, state.mu, state.theta, lambda, theta);
  }
  if (!inside) {
    ++diag_.beta_outside_a;
    return false;
  }

  auto log_q = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd d = b - *mode;
    return -0.5 * d.dot(info * d);
  };
  const double lp_new = log_post_beta_at(proposal, state, theta);
  const double lp_cur = log_post_beta_at(state.beta, state, state.theta);
  const double log_r = lp_new - lp_cur + log_q(state.beta) - log_q(proposal);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (!(std::log(unif(rng)) < log_r)) return false;

  state.beta = proposal;
  state.lambda = std::move(lambda);
  state.theta = std::move(theta);
  kernels::parallel::log_norm_batch(state.mu, state.theta, state.log_norm);
  ++diag_.beta.accepted;
  return true;
}

int Sampler::update_u(ModelState& state, Rng& rng) {
  const std::size_t n = data_->n();
  psi_clusters_ = cluster_latents(state.z);
  const std::size_t G = grid_.size();
  const std::size_t k = psi_clusters_.atoms.size();
  const std::size_t m = G + k;

  std::vector<double> points(grid_.nodes().begin(), grid_.nodes().end());
  std::vector<double> mass(m);
  for (std::size_t j = 0; j < G; ++j) mass[j] = config_.prior.alpha * grid_.weight(j);
  for (std::size_t l = 0; l < k; ++l) {
    points.push_back(state.mu.location(psi_clusters_.atoms[l]));
    mass[G + l] = double(psi_clusters_.counts[l]);
  }

  std::vector<double> e(n * m);
  kernels::parallel::tilt_exponentials(state.theta, points, e);
  std::vector<double> s(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) s[j] += state.u[i] * e[i * m + j];

  auto objective = [&](const std::vector<double>& sv) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) acc -= mass[j] * std::log1p(sv[j]);
    return acc;
  };

  double current = objective(s);
  std::vector<double> trial(m);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  int accepted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = state.u[i];
    std::gamma_distribution<double> walk(delta_, u / delta_);
    double u_new = walk(rng);
    if (!(u_new > 0.0)) u_new = std::numeric_limits<double>::min();
    const double diff = u_new - u;
    const double* ei = e.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) trial[j] = s[j] + diff * ei[j];
    const double proposed = objective(trial);
    const double log_r = proposed - current + gamma_walk_log_correction(u, u_new, delta_);
    ++diag_.u.proposed;
    if (std::log(unif(rng)) < log_r) {
      state.u[i] = u_new;
      s.swap(trial);
      current = proposed;
      ++accepted;
      ++diag_.u.accepted;
    }
  }
  psi_nodes_.assign(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(G));
  psi_star_.assign(s.begin() + static_cast<std::ptrdiff_t>(G), s.end());
  psi_valid_ = true;
  return accepted;
}

void Sampler::draw_u(ModelState& state, Rng& rng) {
  std::exponential_distribution<double> ex(1.0);
  for (std::size_t i = 0; i < state.u.size(); ++i) {
    state.u[i] = std::max(ex(rng) * std::exp(-state.log_norm[i]), std::numeric_limits<double>::min());
    ++diag_.u.proposed;
    ++diag_.u.accepted;
  }
  psi_valid_ = false;
}

bool Sampler::update_mu(ModelState& state, Rng& rng) {
  ++diag_.mu.proposed;
  const std::size_t n = data_->n();
  const Clusters clusters = cluster_latents(state.z);
  const std::size_t k = clusters.atoms.size();
  std::vector<double> z_star(k);
  for (std::size_t l = 0; l < k; ++l) z_star[l] = state.mu.location(clusters.atoms[l]);

  if (!psi_valid_ || psi_clusters_.atoms != clusters.atoms) {
    psi_nodes_.assign(grid_.size(), 0.0);
    psi_star_.assign(k, 0.0);
    kernels::parallel::psi_at(state.u, state.theta, grid_.nodes(), psi_nodes_);
    kernels::parallel::psi_at(state.u, state.theta, z_star, psi_star_);
  }
  psi_valid_ = false;

  const auto intensity =
      crm::LevyIntensity::posterior_tilted(config_.prior.alpha, base_, grid_, psi_nodes_);
  crm::CrmDraw draw = crm::sample_posterior_crm(
      intensity, crm::FixedAtoms{z_star, clusters.counts, psi_star_}, config_.H, rng);
  if (draw.truncated) ++diag_.mu_truncations;
  const DiscreteMeasure& mu_star = draw.measure;

  std::vector<double> lambda(state.lambda), theta_star(n);
  std::vector<kernels::SolveStatus> status(n);
  kernels::parallel::solve_theta_batch(mu_star, lambda, state.theta, theta_star, status);
  for (std::size_t i = 0; i < n; ++i) {
    if (status[i] != kernels::SolveStatus::ok) {
      ++diag_.mu_out_of_range;
      log::debug("mu update: proposal cannot attain a fitted mean; rejected");
      return false;
    }
  }

  std::vector<double> b_ss(n), b_sc(n), b_cs(n);
  kernels::parallel::log_norm_batch(mu_star, theta_star, b_ss);
  kernels::parallel::log_norm_batch(state.mu, theta_star, b_sc);
  kernels::parallel::log_norm_batch(mu_star, state.theta, b_cs);
  double log_r = 0.0;
  if (config_.scheme == McmcConfig::Scheme::augmented) {
    // log C(theta) - log C(theta*): normalizers of the proposal at the two tilts.
    std::vector<double> nodes_star(grid_.size()), atoms_star(k);
    kernels::parallel::psi_at(state.u, theta_star, grid_.nodes(), nodes_star);
    kernels::parallel::psi_at(state.u, theta_star, z_star, atoms_star);
    auto log_c = [&](const std::vector<double>& at_nodes, const std::vector<double>& at_atoms) {
      double acc = 0.0;
      for (std::size_t j = 0; j < at_nodes.size(); ++j)
        acc -= config_.prior.alpha * grid_.weight(j) * std::log1p(at_nodes[j]);
      for (std::size_t l = 0; l < k; ++l) acc -= clusters.counts[l] * std::log1p(at_atoms[l]);
      return acc;
    };
    log_r = log_c(psi_nodes_, psi_star_) - log_c(nodes_star, atoms_star);
    for (std::size_t i = 0; i < n; ++i) {
      const double z = state.mu.location(state.z[i]);
      const double lu = std::log(state.u[i]);
      log_r += (theta_star[i] - state.theta[i]) * z - std::exp(lu + b_ss[i]) +
               std::exp(lu + state.log_norm[i]) - std::exp(lu + b_sc[i]) + std::exp(lu + b_cs[i]);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double z = state.mu.location(state.z[i]);
      log_r += 2.0 * (theta_star[i] - state.theta[i]) * z - b_ss[i] + state.log_norm[i] -
               b_sc[i] + b_cs[i];
    }
  }
  if (log::threshold() >= log::Level::debug) {
    const auto [lo, hi] = std::minmax_element(state.theta.begin(), state.theta.end());
    const auto [slo, shi] = std::minmax_element(theta_star.begin(), theta_star.end());
    std::ostringstream os;
    os << "mu update: log ratio " << log_r << ", theta [" << *lo << ", " << *hi << "], theta* ["
       << *slo << ", " << *shi << "], atoms " << mu_star.size();
    log::debug(os.str());
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (!(std::log(unif(rng)) < log_r)) return false;

  // Fixed atoms occupy the leading slots of the proposal in cluster order.
  for (std::size_t i = 0; i < n; ++i) {
    const auto it = std::lower_bound(clusters.atoms.begin(), clusters.atoms.end(), state.z[i]);
    state.z[i] = static_cast<std::size_t>(it - clusters.atoms.begin());
  }
  state.mu = std::move(draw.measure);
  state.theta = std::move(theta_star);
  state.log_norm = std::move(b_ss);
  ++diag_.mu.accepted;
  return true;
}

void Sampler::update_z(ModelState& state, Rng& rng) {
  const std::size_t n = data_->n();
  psi_valid_ = false;
  const DiscreteMeasure& mu = state.mu;
  std::vector<std::size_t> order(mu.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](auto a, auto b) { return mu.location(a) < mu.location(b); });
  std::vector<double> sorted(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) sorted[k] = mu.location(order[k]);

  const double c = kernel_.halfwidth();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> cum;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = data_->y[i];
    const auto first = static_cast<std::size_t>(
        std::lower_bound(sorted.begin(), sorted.end(), y - c) - sorted.begin());
    const auto last = static_cast<std::size_t>(
        std::upper_bound(sorted.begin(), sorted.end(), y + c) - sorted.begin());
    ++diag_.z.proposed;
    ++diag_.z.accepted;
    if (first >= last) {
      std::size_t k = first;
      if (k == sorted.size() || (k > 0 && y - sorted[k - 1] < sorted[k] - y)) --k;
      state.z[i] = order[k];
      ++diag_.z_fallbacks;
      log::info("z update: no atom within the kernel window; using the nearest atom");
      continue;
    }
    const double th = state.theta[i];
    const double shift = logit_window_shift(th, sorted[first], sorted[last - 1]);
    cum.resize(last - first);
    double total = 0.0;
    for (std::size_t k = first; k < last; ++k) {
      total += mu.weight(order[k]) * std::exp(th * sorted[k] - shift);
      cum[k - first] = total;
    }
    const double target = unif(rng) * total;
    std::size_t pick = static_cast<std::size_t>(
        std::upper_bound(cum.begin(), cum.end(), target) - cum.begin());
    pick = std::min(pick, cum.size() - 1);
    state.z[i] = order[first + pick];
  }
}

namespace {

void check_data(const Dataset& data, const McmcConfig& config) {
  const std::size_t n = data.n();
  if (static_cast<std::size_t>(data.x.rows()) != n)
    throw DataError("design matrix rows do not match the number of responses");
  if (data.p() == 0) throw ConfigError("design matrix has no columns");
  for (std::size_t i = 0; i < n; ++i) {
    if (!config.prior.support.contains_open(data.y[i])) {
      std::ostringstream os;
      os << "response " << i + 1 << " (" << data.y[i] << ") outside the open support";
      throw DataError(os.str());
    }
  }
  if (n > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(data.x);
    if (qr.rank() < static_cast<Eigen::Index>(data.p()))
      throw ConfigError("design matrix is not of full column rank");
  }
}

double resolve_m0(const Dataset& data, const M0Policy& policy) {
  switch (policy.kind) {
    case M0Policy::Kind::none:
      return std::numeric_limits<double>::quiet_NaN();
    case M0Policy::Kind::fixed:
      return policy.value;
    case M0Policy::Kind::sample_mean:
      if (data.n() == 0) throw ConfigError("m0 = sample mean needs data");
      return std::accumulate(data.y.begin(), data.y.end(), 0.0) / double(data.n());
    case M0Policy::Kind::sample_median: {
      if (data.n() == 0) throw ConfigError("m0 = sample median needs data");
      std::vector<double> s(data.y);
      std::sort(s.begin(), s.end());
      const std::size_t h = s.size() / 2;
      return s.size() % 2 ? s[h] : 0.5 * (s[h - 1] + s[h]);
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

PosteriorDraws run_chain(const Dataset& data, const McmcConfig& config, Rng& rng) {
  config.validate();
  check_data(data, config);
  Sampler sampler(data, config);
  ModelState state = sampler.initialize(rng);

  PosteriorDraws draws;
  draws.m0 = resolve_m0(data, config.m0);
  draws.halfwidth = sampler.kernel().halfwidth();
  draws.support = config.prior.support;
  draws.link = sampler.link();

  const int kept = (config.n_iter - config.burn_in) / config.thin;
  std::vector<Eigen::VectorXd> betas;
  betas.reserve(static_cast<std::size_t>(kept));
  draws.baseline.reserve(static_cast<std::size_t>(kept));

  long window_proposed = 0, window_accepted = 0;
  for (int iter = 0; iter < config.n_iter; ++iter) {
    if (config.scheme == McmcConfig::Scheme::augmented) {
      sampler.draw_u(state, rng);
    } else {
      const long before = sampler.diagnostics().u.proposed;
      window_accepted += sampler.update_u(state, rng);
      window_proposed += sampler.diagnostics().u.proposed - before;
    }
    sampler.update_mu(state, rng);
    sampler.update_z(state, rng);
    sampler.update_beta(state, rng);

    if (config.adapt_delta && iter < config.burn_in && (iter + 1) % kAdaptWindow == 0 &&
        window_proposed > 0) {
      const double rate = double(window_accepted) / double(window_proposed);
      sampler.set_delta(std::max(1.0, sampler.delta() * std::exp(kTargetUAcceptance - rate)));
      window_proposed = window_accepted = 0;
    }

    if (iter >= config.burn_in && (iter - config.burn_in + 1) % config.thin == 0) {
      if (std::isnan(draws.m0)) {
        draws.baseline.push_back(state.mu.normalized());
      } else if (auto c = tilt::try_solve_theta(state.mu, draws.m0)) {
        draws.baseline.push_back(tilt::retilt(state.mu, *c).normalized());
      } else {
        ++sampler.diagnostics().retilt_failures;
        continue;
      }
      betas.push_back(state.beta);
    }
  }

  draws.beta.resize(static_cast<Eigen::Index>(betas.size()),
                    static_cast<Eigen::Index>(data.p()));
  for (std::size_t r = 0; r < betas.size(); ++r)
    draws.beta.row(static_cast<Eigen::Index>(r)) = betas[r].transpose();
  draws.diagnostics = sampler.diagnostics();
  draws.diagnostics.final_delta = sampler.delta();
  return draws;
}

PosteriorDraws run_chain(const Dataset& data, const McmcConfig& config) {
  Rng rng = make_rng(config.seed, 0);
  return run_chain(data, config, rng);
}

}  // namespace tiltcrm::mcmc
