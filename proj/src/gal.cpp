#include "sofqr/gal.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "sofqr/numerics.hpp"

namespace sofqr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2 = 0.69314718055994530942;

// Positive root of log h(g) = log_target on g > 0; h is strictly decreasing there.
double positive_root(double log_target) {
  double lo = 0.0;
  double hi = 40.0;
  while (log_h_of_gamma(hi) > log_target) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e12) throw ValidationError("gamma_bounds: target quantile too extreme");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (log_h_of_gamma(mid) > log_target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  // Finish to full precision; cheap and keeps |h - target| near rounding.
  for (int it = 0; it < 64; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (log_h_of_gamma(mid) > log_target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

void check_tau0(double tau0, const char* where) {
  if (!(tau0 > 0.0 && tau0 < 1.0)) {
    std::ostringstream msg;
    msg << where << ": tau0 must lie in (0, 1), got " << tau0;
    throw ValidationError(msg.str());
  }
}

struct Standardized {
  double x;
  double p;
  double alpha;  // >= 0 after reflection
};

// eps ~ GAL(p, alpha) is the reflection of -eps ~ GAL(1 - p, -alpha).
Standardized standardize(double eps, const GalParams& g) {
  const double x = eps / g.sigma();
  const double alpha = g.alpha();
  if (alpha < 0.0) return {-x, 1.0 - g.tau(), -alpha};
  return {x, g.tau(), alpha};
}

}  // namespace

double log_h_of_gamma(double gamma) {
  if (!std::isfinite(gamma)) throw ValidationError("h_of_gamma: gamma must be finite");
  const double a = std::abs(gamma);
  return kLog2 + log_norm_cdf(-a) + 0.5 * a * a;
}

double h_of_gamma(double gamma) { return std::exp(log_h_of_gamma(gamma)); }

GammaBounds gamma_bounds(double tau0) {
  check_tau0(tau0, "gamma_bounds");
  return {-positive_root(std::log1p(-tau0)), positive_root(std::log(tau0))};
}

double adjust_tau(double tau0, double gamma) {
  check_tau0(tau0, "adjust_tau");
  const GammaBounds b = gamma_bounds(tau0);
  if (!(gamma > b.lower && gamma < b.upper)) {
    std::ostringstream msg;
    msg << "adjust_tau: gamma " << gamma << " outside (" << b.lower << ", " << b.upper << ")";
    throw ValidationError(msg.str());
  }
  const double neg = gamma < 0.0 ? 1.0 : 0.0;
  return neg + (tau0 - neg) / h_of_gamma(gamma);
}

GalParams::GalParams(double tau0, double gamma, double sigma)
    : tau0_(tau0), gamma_(gamma), sigma_(sigma) {
  check_tau0(tau0, "GalParams");
  init(gamma_bounds(tau0));
}

GalParams::GalParams(double tau0, double gamma, double sigma, const GammaBounds& bounds)
    : tau0_(tau0), gamma_(gamma), sigma_(sigma) {
  check_tau0(tau0, "GalParams");
  init(bounds);
}

void GalParams::init(const GammaBounds& bounds) {
  if (!(sigma_ > 0.0) || !std::isfinite(sigma_)) throw ValidationError("GalParams: sigma must be > 0");
  if (!(gamma_ > bounds.lower && gamma_ < bounds.upper)) {
    std::ostringstream msg;
    msg << "GalParams: gamma " << gamma_ << " outside (" << bounds.lower << ", " << bounds.upper
        << ") for tau0 = " << tau0_;
    throw ValidationError(msg.str());
  }
  if (gamma_ == 0.0) {
    tau_ = tau0_;
    c_ = 0.0;
  } else {
    const double neg = gamma_ < 0.0 ? 1.0 : 0.0;
    tau_ = neg + (tau0_ - neg) / h_of_gamma(gamma_);
    c_ = 1.0 / ((gamma_ > 0.0 ? 1.0 : 0.0) - tau_);
  }
  if (!(tau_ > 0.0 && tau_ < 1.0)) throw ValidationError("GalParams: adjusted tau left (0, 1)");
  a_ = (1.0 - 2.0 * tau_) / (tau_ * (1.0 - tau_));
  b_ = 2.0 / (tau_ * (1.0 - tau_));
}

GalPieces gal_log_pieces(double eps, const GalParams& params) {
  const Standardized st = standardize(eps, params);
  const double p = st.p;
  const double log_norm = kLog2 + std::log(p * (1.0 - p));
  if (st.alpha == 0.0) {
    // AL: s is independent of eps and keeps its half-normal law.
    const double check = st.x >= 0.0 ? p * st.x : (p - 1.0) * st.x;
    return {kNegInf, log_norm - check + log_norm_cdf(0.0), 0.0, 0.0, 0.0};
  }
  const double pa = p * st.alpha;
  const double qa = (1.0 - p) * st.alpha;
  const double split = st.x > 0.0 ? st.x / st.alpha : 0.0;
  GalPieces out{kNegInf, kNegInf, split, pa, -qa};
  if (split > 0.0) {
    out.log_lower = log_norm - p * st.x + 0.5 * pa * pa + log_norm_cdf_diff(-pa, split - pa);
  }
  out.log_upper = log_norm + (1.0 - p) * st.x + 0.5 * qa * qa + log_norm_cdf(-split - qa);
  return out;
}

double gal_logpdf(double eps, const GalParams& params) {
  if (!std::isfinite(eps)) return kNegInf;
  const GalPieces pieces = gal_log_pieces(eps, params);
  return log_add_exp(pieces.log_lower, pieces.log_upper) - std::log(params.sigma());
}

double gal_sample(const GalParams& params, Rng& rng) {
  const double sigma = params.sigma();
  const double s = sigma * std::abs(std_normal(rng));
  const double nu = sigma * std_exponential(rng);
  const double u = std_normal(rng);
  return params.alpha() * s + params.A() * nu + u * std::sqrt(sigma * params.B() * nu);
}

GalMixture::GalMixture(std::vector<double> weights, std::vector<GalParams> components)
    : weights_(std::move(weights)), components_(std::move(components)) {
  if (components_.empty()) throw ValidationError("GalMixture: need at least one component");
  if (weights_.size() != components_.size())
    throw ValidationError("GalMixture: weights and components differ in length");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) throw ValidationError("GalMixture: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ValidationError("GalMixture: weights must sum to 1");
  for (const auto& c : components_) {
    if (c.tau0() != components_.front().tau0())
      throw ValidationError("GalMixture: components must share tau0");
  }
}

double galmix_logpdf(double eps, const GalMixture& mix) {
  if (mix.size() == 1) return gal_logpdf(eps, mix.components().front());
  double acc = kNegInf;
  for (int k = 0; k < mix.size(); ++k) {
    const double w = mix.weights()[k];
    if (w <= 0.0) continue;
    acc = log_add_exp(acc, std::log(w) + gal_logpdf(eps, mix.components()[k]));
  }
  return acc;
}

double galmix_sample(const GalMixture& mix, Rng& rng) {
  double u = std_uniform(rng);
  int k = 0;
  for (; k < mix.size() - 1; ++k) {
    u -= mix.weights()[k];
    if (u <= 0.0) break;
  }
  return gal_sample(mix.components()[k], rng);
}

}  // namespace sofqr
