#pragma once

// Generalized asymmetric Laplace (GAL) working likelihood, parameterized so
// that its tau0-quantile sits at zero for every shape gamma.
//
// Mixture representation used throughout (sigma-scale family):
//
//   eps = alpha * s + A * nu + sqrt(sigma * B * nu) * u,
//   s ~ Normal+(0, sigma^2),  nu ~ Exponential(mean sigma),  u ~ Normal(0, 1),
//
// with tau = I(gamma < 0) + (tau0 - I(gamma < 0)) / h(gamma),
// A = (1 - 2 tau) / (tau (1 - tau)), B = 2 / (tau (1 - tau)),
// C = 1 / (I(gamma > 0) - tau) and alpha = C |gamma|.
//
// "Exp(sigma)" is read as the exponential with MEAN sigma; with that reading
// eps / sigma does not depend on sigma, i.e. sigma is a pure scale.

#include <cmath>
#include <span>
#include <vector>

#include "sofqr/random.hpp"

namespace sofqr {

struct GammaBounds {
  double lower;  // negative root of h(gamma) - (1 - tau0)
  double upper;  // positive root of h(gamma) - tau0
};

/// h(gamma) = 2 Phi(-|gamma|) exp(gamma^2 / 2), evaluated in log space.
double h_of_gamma(double gamma);
double log_h_of_gamma(double gamma);

GammaBounds gamma_bounds(double tau0);

/// Skewness level tau that puts the tau0-quantile at zero.
double adjust_tau(double tau0, double gamma);

class GalParams {
 public:
  GalParams(double tau0, double gamma, double sigma);
  /// Skips the root solve when the caller already holds gamma_bounds(tau0).
  GalParams(double tau0, double gamma, double sigma, const GammaBounds& bounds);

  double tau0() const { return tau0_; }
  double gamma() const { return gamma_; }
  double sigma() const { return sigma_; }
  double tau() const { return tau_; }
  double A() const { return a_; }
  double B() const { return b_; }
  double C() const { return c_; }
  /// Skewness of the half-normal term, C |gamma|.
  double alpha() const { return c_ * std::abs(gamma_); }

 private:
  void init(const GammaBounds& bounds);

  double tau0_;
  double gamma_;
  double sigma_;
  double tau_ = 0.0;
  double a_ = 0.0;
  double b_ = 0.0;
  double c_ = 0.0;
};

double gal_logpdf(double eps, const GalParams& params);
double gal_sample(const GalParams& params, Rng& rng);

/// The two pieces of the standardized density (s below / above eps/alpha),
/// as log masses. Their log-sum-exp is gal_logpdf + log(sigma). Used by the
/// Gibbs sampler to draw the half-normal latent exactly.
///
/// In standardized units (s / sigma) the latent is Normal(mean_lower, 1) on
/// [0, split] with log mass log_lower, and Normal(mean_upper, 1) on
/// (split, inf) with log mass log_upper.
struct GalPieces {
  double log_lower;
  double log_upper;
  double split;
  double mean_lower;
  double mean_upper;
};
GalPieces gal_log_pieces(double eps, const GalParams& params);

class GalMixture {
 public:
  GalMixture(std::vector<double> weights, std::vector<GalParams> components);

  int size() const { return static_cast<int>(components_.size()); }
  double tau0() const { return components_.front().tau0(); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<GalParams>& components() const { return components_; }

 private:
  std::vector<double> weights_;
  std::vector<GalParams> components_;
};

double galmix_logpdf(double eps, const GalMixture& mix);
double galmix_sample(const GalMixture& mix, Rng& rng);

}  // namespace sofqr
