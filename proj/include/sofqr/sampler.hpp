#pragma once

// Gibbs samplers for scalar-on-function quantile regression with a
// truncated Dirichlet-process mixture of GAL errors.
//
//   Y_i = beta0 + Z_i' beta_z + X_i' phi + eps_i,   eps_i ~ sum_k pi_k GAL(tau0, gamma_k, sigma_k)
//   W_ij = X_i + U_ij,                              U_ij  ~ sum_k pi_uk MVN(mu_uk, Sigma_uk)
//   X_i ~ sum_k pi_xk MVN(mu_xk, Sigma_xk)
//
// X_i, W_ij are basis scores. In fixed-X mode the scores are data (naive
// or calibrated) and only the regression part is sampled.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sofqr/basis.hpp"
#include "sofqr/calibration.hpp"
#include "sofqr/data.hpp"
#include "sofqr/gal.hpp"
#include "sofqr/random.hpp"

namespace sofqr {

enum class Estimator { FBQ, Fast, Naive };
enum class GibbsMode { Full, FixedX };
enum class ThetaPrior { ScaleDependent, InverseGamma };

std::string to_string(Estimator e);
Estimator estimator_from_string(const std::string& name);

struct PriorConfig {
  // (beta0, beta_z) ~ MVN(0, Sigma_z0); defaults to coef_prior_var * I.
  std::optional<Eigen::MatrixXd> sigma_z0;
  double coef_prior_var = 1e4;

  // phi | theta2 ~ MVN(0, theta2 (P + penalty_ridge I)^{-1}). A zero ridge
  // keeps the partially improper P-spline prior.
  double penalty_ridge = 0.0;
  ThetaPrior theta_prior = ThetaPrior::ScaleDependent;
  // Rate of theta ~ Exponential(theta_rate) (Weibull(1/2) on theta2).
  // Zero means: set the prior median of theta to the least-squares residual scale.
  double theta_rate = 0.0;
  double theta_ig_shape = 1.0;
  double theta_ig_rate = 0.005;

  int K_eps = 3;
  double alpha_eps = 1.0;
  double sigma_shape = 1.0;  // sigma_k ~ Gamma(shape, rate)
  double sigma_rate = 0.01;
  std::optional<double> fixed_gamma;

  int K_u = 3;
  double alpha_u = 1.0;
  std::optional<Eigen::VectorXd> mu_u0;
  std::optional<Eigen::MatrixXd> sigma_u0;
  double nu_u0 = 0.0;  // 0 means K + 3
  std::optional<Eigen::MatrixXd> psi_u0;

  int K_x = 3;
  double alpha_x = 1.0;
  std::optional<Eigen::VectorXd> mu_x0;
  std::optional<Eigen::MatrixXd> sigma_x0;
  double nu_x0 = 0.0;
  std::optional<Eigen::MatrixXd> psi_x0;
};

/// PriorConfig with every data-dependent default filled in.
struct ResolvedPriors {
  Eigen::MatrixXd coef_precision;  // (1 + p) x (1 + p)
  Eigen::MatrixXd phi_penalty;     // P + ridge I
  int penalty_rank = 0;
  ThetaPrior theta_prior = ThetaPrior::ScaleDependent;
  double theta_rate = 1.0;
  double theta_ig_shape = 1.0;
  double theta_ig_rate = 0.005;

  int K_eps = 3;
  double alpha_eps = 1.0;
  double sigma_shape = 1.0;
  double sigma_rate = 0.01;
  std::optional<double> fixed_gamma;
  GammaBounds bounds{};
  double tau0 = 0.5;

  int K_u = 3;
  double alpha_u = 1.0;
  Eigen::VectorXd mu_u0;
  Eigen::MatrixXd sigma_u0;
  double nu_u0 = 0.0;
  Eigen::MatrixXd psi_u0;

  int K_x = 3;
  double alpha_x = 1.0;
  Eigen::VectorXd mu_x0;
  Eigen::MatrixXd sigma_x0;
  double nu_x0 = 0.0;
  Eigen::MatrixXd psi_x0;
};

/// What a sweep conditions on.
struct SamplerData {
  double tau0 = 0.5;
  Eigen::VectorXd y;                       // n
  Eigen::MatrixXd z;                       // n x p, no intercept column
  Eigen::MatrixXd x_fixed;                 // n x K, fixed-X mode
  std::vector<Eigen::MatrixXd> w_scores;   // n entries of J x K, full mode
  Eigen::MatrixXd penalty;                 // K x K

  int n() const { return static_cast<int>(y.size()); }
  int p() const { return static_cast<int>(z.cols()); }
  int K() const { return static_cast<int>(penalty.rows()); }
};

struct ModelState {
  double beta0 = 0.0;
  Eigen::VectorXd beta_z;
  Eigen::VectorXd phi;
  double theta2 = 1.0;

  Eigen::VectorXd s;   // half-normal latents
  Eigen::VectorXd nu;  // exponential latents
  std::vector<int> eps_label;
  Eigen::VectorXd eps_weights;
  std::vector<double> gamma;
  std::vector<double> sigma;

  Eigen::MatrixXd X;  // n x K latent scores (full mode)
  std::vector<int> x_label;
  Eigen::VectorXd x_weights;
  std::vector<Eigen::VectorXd> x_mu;
  std::vector<Eigen::MatrixXd> x_cov;

  std::vector<int> u_label;  // n * J, subject-major
  Eigen::VectorXd u_weights;
  std::vector<Eigen::VectorXd> u_mu;
  std::vector<Eigen::MatrixXd> u_cov;

  // Adaptive random-walk state for (gamma_k, sigma_k).
  std::vector<double> mh_log_step;
  std::vector<long> mh_accepted;
  std::vector<long> mh_proposed;
  long iteration = 0;

  GalMixture gal_mixture(double tau0, const GammaBounds& bounds) const;
};

struct StepOptions {
  bool adapt = false;          // tune the MH step sizes (burn-in only)
  double target_accept = 0.3;
};

/// The design-free part of priors: only needs the sampler inputs and, for the
/// full model, moment estimates of the score covariances.
ResolvedPriors resolve_priors(const PriorConfig& config, const SamplerData& data,
                              const Eigen::MatrixXd& init_scores,
                              const std::optional<MomentEstimates>& moments);

/// Least-squares start, gamma = 0, sigma = MAD of residuals, random labels.
ModelState initial_state(const SamplerData& data, const ResolvedPriors& priors, GibbsMode mode,
                         const Eigen::MatrixXd& init_scores, Rng& rng);

/// One sweep, in order: (gamma_k, sigma_k) by random-walk MH on the target
/// with (s, nu) integrated out; labels then (s_i, nu_i) drawn exactly from
/// their joint conditional; (beta0, beta_z, phi); theta2; GAL weights; and in
/// full mode X_i, the measurement-error mixture (re-centred so that
/// sum_k pi_uk mu_uk = 0) and the X mixture.
void gibbs_step(ModelState& state, const SamplerData& data, const ResolvedPriors& priors,
                GibbsMode mode, const StepOptions& options, Rng& rng);

/// Redraws y from p(y | state) (used by getting-it-right checks).
void simulate_response(const ModelState& state, SamplerData& data, GibbsMode mode, Rng& rng);

/// Per-observation conditional log-likelihood log f_eps(y_i - fitted_i).
Eigen::VectorXd pointwise_loglik(const ModelState& state, const SamplerData& data,
                                 const ResolvedPriors& priors, GibbsMode mode);

double mvn_mixture_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& weights,
                          const std::vector<Eigen::VectorXd>& means,
                          const std::vector<Eigen::MatrixXd>& covs);

struct McmcConfig {
  int iters = 4000;
  int burnin = 1000;
  int thin = 1;
  int chains = 1;
  std::uint64_t seed = 1;
  bool store_loglik = true;
  double target_accept = 0.3;
};

struct PosteriorDraws {
  double tau0 = 0.5;
  Estimator estimator = Estimator::Fast;
  McmcConfig mcmc;
  Eigen::VectorXd beta0;      // D
  Eigen::MatrixXd beta_z;     // D x p
  Eigen::MatrixXd phi;        // D x K
  Eigen::VectorXd theta2;     // D
  Eigen::MatrixXd gal_weights;  // D x K_eps
  Eigen::MatrixXd gal_gamma;
  Eigen::MatrixXd gal_sigma;
  Eigen::MatrixXd loglik;     // n x D, empty when not stored
  std::vector<double> mh_acceptance;  // per GAL component, post burn-in, pooled over chains

  int draws() const { return static_cast<int>(beta0.size()); }
};

/// Runs calibration as the estimator requires, then the matching Gibbs mode.
PosteriorDraws fit(const FunctionalDataset& data, const BasisSystem& basis, const PriorConfig& priors,
                   double tau0, Estimator estimator, const McmcConfig& mcmc);

/// Same, on precomputed fixed scores (no measurement-error handling).
PosteriorDraws fit_fixed_scores(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& z,
                                const Eigen::VectorXd& y, const BasisSystem& basis,
                                const PriorConfig& priors, double tau0, Estimator estimator,
                                const McmcConfig& mcmc);

/// WAIC = -2 (lppd - p_waic), p_waic = sum_i Var_draws(loglik_i).
double waic(const Eigen::MatrixXd& loglik);
double waic(const PosteriorDraws& draws);

Eigen::VectorXd posterior_mean_phi(const PosteriorDraws& draws);

}  // namespace sofqr
