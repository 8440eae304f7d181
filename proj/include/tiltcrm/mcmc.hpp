#pragma once

// Posterior simulation for the tilted gamma-CRM GLM. One iteration cycles
// four transition kernels in the order u, mu, z, beta:
//   u    exact draw u_i ~ Exp(e^{b_i}) (augmented scheme), or a componentwise
//        gamma random walk against the marginal u-conditional (marginal scheme)
//   mu   posterior-CRM proposal (fixed theta) + MH correction for theta(mu)
//   z    Gibbs draw over the current atoms
//   beta independence proposal N(mode, inverse Fisher) restricted to A + MH

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tiltcrm/crm.hpp"
#include "tiltcrm/dataset.hpp"
#include "tiltcrm/measure.hpp"
#include "tiltcrm/rng.hpp"
#include "tiltcrm/tilt.hpp"

namespace tiltcrm::mcmc {

struct Prior {
  /// Empty mean/cov expand to 0 and prior_variance * I at the design width.
  Eigen::VectorXd beta_mean;
  Eigen::MatrixXd beta_cov;
  double prior_variance = 100.0;
  double alpha = 1.0;
  Support support{0.0, 1.0};
};

struct M0Policy {
  enum class Kind { none, fixed, sample_mean, sample_median };
  Kind kind = Kind::sample_mean;
  double value = std::numeric_limits<double>::quiet_NaN();
};

struct McmcConfig {
  /// augmented: u_i | mu, beta ~ Exp(e^{b_i}) drawn exactly, and the mu ratio
  /// carries the theta-dependent normalizer of the posterior-CRM proposal.
  /// marginal: gamma random walk on the mu-marginal u density and the product
  /// ratio without that normalizer (does not leave the posterior invariant).
  enum class Scheme { augmented, marginal };
  Scheme scheme = Scheme::augmented;
  int n_iter = 2000;
  int burn_in = 1000;
  int thin = 4;
  std::size_t H = 200;
  double delta = 2.0;
  bool adapt_delta = true;
  double kernel_halfwidth_factor = 1.0;
  /// Used instead of the Silverman rule when positive.
  double kernel_halfwidth = 0.0;
  M0Policy m0{};
  std::uint64_t seed = 1;
  Prior prior{};

  void validate() const;
};

/// Uniform kernel K(y | z) = 1 / (2c) on |y - z| <= c.
class Kernel {
 public:
  explicit Kernel(double halfwidth);

  /// c = factor * 1.06 sd(y) n^{-1/5}.
  static Kernel silverman(std::span<const double> y, double factor);

  double halfwidth() const { return c_; }
  double density(double y, double z) const { return std::fabs(y - z) <= c_ ? 0.5 / c_ : 0.0; }
  /// P(Y <= y | z).
  double cdf(double y, double z) const;

 private:
  double c_;
};

struct ModelState {
  Eigen::VectorXd beta;
  DiscreteMeasure mu;
  /// Atom index of z_i in mu.
  std::vector<std::size_t> z;
  std::vector<double> u;
  std::vector<double> lambda;
  std::vector<double> theta;
  std::vector<double> log_norm;

  double z_location(std::size_t i) const { return mu.location(z[i]); }
  std::vector<double> z_locations() const;
};

struct StepStats {
  long proposed = 0;
  long accepted = 0;
  double rate() const { return proposed > 0 ? double(accepted) / double(proposed) : 0.0; }
};

struct Diagnostics {
  StepStats u, mu, z, beta;
  long beta_forced_rejections = 0;
  long beta_outside_a = 0;
  long mu_out_of_range = 0;
  long mu_truncations = 0;
  long z_fallbacks = 0;
  long retilt_failures = 0;
  double final_delta = 0.0;
};

struct PosteriorDraws {
  Eigen::MatrixXd beta;                  // R x p
  std::vector<DiscreteMeasure> baseline;  // normalized; mean m0 unless policy none
  double m0 = std::numeric_limits<double>::quiet_NaN();
  double halfwidth = 0.0;
  Support support{};
  tilt::LinkSpec link{};
  Diagnostics diagnostics{};

  std::size_t size() const { return baseline.size(); }
};

/// Unique atom indices among z with their multiplicities (sorted by index).
struct Clusters {
  std::vector<std::size_t> atoms;
  std::vector<int> counts;
};
Clusters cluster_latents(std::span<const std::size_t> z);

/// -\int log(1 + sum_i u_i e^{theta_i v}) G_n(dv), G_n = alpha G0 + sum_j delta_{z_j};
/// the G0 integral uses the midpoint grid.
double log_post_u(std::span<const double> u, std::span<const double> theta,
                  std::span<const double> z, double alpha, const QuadratureGrid& g0);

/// log q(u | u_new) - log q(u_new | u) for the Gamma(delta, delta / u) walk.
double gamma_walk_log_correction(double u, double u_new, double delta);

/// Product form of the marginal-scheme mu acceptance ratio.
double mu_log_ratio(const DiscreteMeasure& mu, const DiscreteMeasure& mu_star,
                    std::span<const double> theta, std::span<const double> theta_star,
                    std::span<const double> z);

/// Exact mu ratio given u: sum (theta*_i - theta_i) z_i
///   - sum u_i [T(mu*, theta*_i) - T(mu, theta_i) + T(mu, theta*_i) - T(mu*, theta_i)]
///   + log_c - log_c_star, with T = e^b and log_c = log_post_u at theta, log_c_star at theta*.
double mu_log_ratio_augmented(const DiscreteMeasure& mu, const DiscreteMeasure& mu_star,
                              std::span<const double> theta, std::span<const double> theta_star,
                              std::span<const double> z, std::span<const double> u,
                              double log_c, double log_c_star);

/// Same ratio assembled from target and proposal log-densities; the common
/// prior factor is supplied by the caller and must cancel.
double mu_log_ratio_direct(const DiscreteMeasure& mu, const DiscreteMeasure& mu_star,
                           std::span<const double> theta, std::span<const double> theta_star,
                           std::span<const double> z,
                           const std::function<double(const DiscreteMeasure&)>& log_prior);

/// Weight of the atom located exactly at z; throws if absent.
double atom_weight_at(const DiscreteMeasure& mu, double z);

class Sampler {
 public:
  Sampler(const Dataset& data, const McmcConfig& config);

  const Dataset& data() const { return *data_; }
  const McmcConfig& config() const { return config_; }
  const Kernel& kernel() const { return kernel_; }
  const tilt::LinkSpec& link() const { return link_; }
  const QuadratureGrid& grid() const { return grid_; }
  Diagnostics& diagnostics() { return diag_; }
  double delta() const { return delta_; }
  void set_delta(double delta) { delta_ = delta; }

  ModelState initialize(Rng& rng);

  /// Sum_i {theta_i z_i - b(theta_i) + log mu(z_i)} + log p(beta), -inf outside A.
  double log_post_beta(const Eigen::VectorXd& beta, const ModelState& state) const;

  /// Fisher information sum_i x_i x_i^T / (g'(lambda_i)^2 b''(theta_i)) at beta.
  std::optional<Eigen::MatrixXd> fisher_information(const Eigen::VectorXd& beta,
                                                    const ModelState& state) const;

  /// Posterior mode of beta given (mu, z); nullopt if Newton does not converge.
  std::optional<Eigen::VectorXd> beta_mode(const ModelState& state,
                                           const Eigen::VectorXd& start) const;

  bool update_beta(ModelState& state, Rng& rng);
  /// Gamma random walk on the mu-marginal density; returns accepted components.
  int update_u(ModelState& state, Rng& rng);
  /// Exact conditional draw u_i ~ Exp(e^{b_i}).
  void draw_u(ModelState& state, Rng& rng);
  bool update_mu(ModelState& state, Rng& rng);
  void update_z(ModelState& state, Rng& rng);

  /// theta_i and b_i for every observation at (beta, mu); false if outside A.
  bool derive(const Eigen::VectorXd& beta, const DiscreteMeasure& mu,
              std::span<const double> guess, std::vector<double>& lambda,
              std::vector<double>& theta) const;

 private:
  double log_prior_beta(const Eigen::VectorXd& beta) const;
  /// log_post_beta with theta already solved at beta.
  double log_post_beta_at(const Eigen::VectorXd& beta, const ModelState& state,
                          std::span<const double> theta) const;
  /// Fisher scoring; `info` receives Fisher + prior precision at the mode.
  std::optional<Eigen::VectorXd> find_mode(const ModelState& state, const Eigen::VectorXd& start,
                                           Eigen::MatrixXd* info) const;

  const Dataset* data_;
  McmcConfig config_;
  BaseMeasure base_;
  QuadratureGrid grid_;
  Kernel kernel_;
  tilt::LinkSpec link_;
  Eigen::VectorXd prior_mean_;
  Eigen::MatrixXd prior_precision_;
  double prior_log_const_ = 0.0;
  double delta_;
  Diagnostics diag_{};

  // psi on the grid nodes and at the cluster atoms, left by update_u for update_mu.
  bool psi_valid_ = false;
  std::vector<double> psi_nodes_;
  std::vector<double> psi_star_;
  Clusters psi_clusters_;
  std::optional<Eigen::VectorXd> last_mode_;
};

PosteriorDraws run_chain(const Dataset& data, const McmcConfig& config, Rng& rng);

/// Convenience: derives the chain stream from config.seed.
PosteriorDraws run_chain(const Dataset& data, const McmcConfig& config);

}  // namespace tiltcrm::mcmc
