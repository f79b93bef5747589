#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <span>

namespace sofqr {

/// Every sampler takes an explicit engine; one engine per chain/thread.
using Rng = std::mt19937_64;

/// Mixes (base, a, b, c) into a well-spread 64-bit seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

double std_normal(Rng& rng);
double std_uniform(Rng& rng);  // (0, 1)
double std_exponential(Rng& rng);
double gamma_sample(double shape, double rate, Rng& rng);
double chi_squared_sample(double dof, Rng& rng);

/// Normal(mean, sd^2) conditioned on (lower, inf). Uses exponential
/// rejection in the far tail so lower = mean + 8 sd costs O(1).
double trunc_normal_sample(double mean, double sd, double lower, Rng& rng);

/// Normal(mean, sd^2) conditioned on (lower, upper).
double trunc_normal_sample(double mean, double sd, double lower, double upper, Rng& rng);

/// Generalized inverse Gaussian with density proportional to
/// x^(lambda-1) exp(-(chi/x + psi*x)/2), chi > 0, psi > 0.
double gig_sample(double lambda, double chi, double psi, Rng& rng);

/// Draws an index with probability proportional to exp(log_weights).
int categorical_log_sample(std::span<const double> log_weights, Rng& rng);

Eigen::VectorXd dirichlet_sample(const Eigen::VectorXd& concentration, Rng& rng);

/// MVN draw given the precision matrix Q and the linear term h, i.e. mean
/// Q^{-1} h. Returns false when Q is not positive definite.
bool mvn_canonical_sample(const Eigen::MatrixXd& precision, const Eigen::VectorXd& linear,
                          Rng& rng, Eigen::VectorXd& out);

Eigen::VectorXd mvn_sample(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng);

/// Inverse-Wishart(dof, scale) via the Bartlett decomposition of its inverse.
Eigen::MatrixXd inv_wishart_sample(double dof, const Eigen::MatrixXd& scale, Rng& rng);

}  // namespace sofqr
