#include "sofqr/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sofqr/numerics.hpp"

namespace sofqr {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Standard normal truncated to (a, inf).
double std_trunc_lower(double a, Rng& rng) {
  if (a < 0.45) {
    for (;;) {
      const double z = std_normal(rng);
      if (z > a) return z;
    }
  }
  // Robert (1995): translated exponential proposal with optimal rate.
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double z = a + std_exponential(rng) / rate;
    const double d = z - rate;
    if (std_uniform(rng) <= std::exp(-0.5 * d * d)) return z;
  }
}

// Standard normal truncated to (a, b), a >= 0.
double std_trunc_positive_interval(double a, double b, Rng& rng) {
  if (0.5 * (b * b - a * a) <= 1.0) {
    for (;;) {
      const double z = a + (b - a) * std_uniform(rng);
      if (std_uniform(rng) <= std::exp(0.5 * (a * a - z * z))) return z;
    }
  }
  for (;;) {
    const double z = std_trunc_lower(a, rng);
    if (z < b) return z;
  }
}

double std_trunc_interval(double a, double b, Rng& rng) {
  if (b <= 0.0) return -std_trunc_positive_interval(-b, -a, rng);
  if (a >= 0.0) return std_trunc_positive_interval(a, b, rng);
  if (b - a >= 2.5) {
    for (;;) {
      const double z = std_normal(rng);
      if (z > a && z < b) return z;
    }
  }
  for (;;) {
    const double z = a + (b - a) * std_uniform(rng);
    if (std_uniform(rng) <= std::exp(-0.5 * z * z)) return z;
  }
}

double gig_psi(double x, double alpha, double lambda) {
  return -alpha * (std::cosh(x) - 1.0) - lambda * (std::exp(x) - x - 1.0);
}

double gig_dpsi(double x, double alpha, double lambda) {
  return -alpha * std::sinh(x) - lambda * (std::exp(x) - 1.0);
}

// Devroye (2014) rejection sampler for the two-parameter GIG(lambda, omega),
// lambda >= 0, density proportional to x^(lambda-1) exp(-omega (x + 1/x) / 2).
double gig_two_parameter(double lambda, double omega, Rng& rng) {
  const double alpha = std::sqrt(omega * omega + lambda * lambda) - lambda;

  double t = 1.0;
  double x = -gig_psi(1.0, alpha, lambda);
  if (x > 2.0) {
    t = std::sqrt(2.0 / (alpha + lambda));
  } else if (x < 0.5) {
    t = std::log(4.0 / (alpha + 2.0 * lambda));
  }

  double s = 1.0;
  x = -gig_psi(-1.0, alpha, lambda);
  if (x > 2.0) {
    s = std::sqrt(4.0 / (alpha * std::cosh(1.0) + lambda));
  } else if (x < 0.5) {
    const double via_alpha =
        std::log(1.0 + 1.0 / alpha + std::sqrt(1.0 / (alpha * alpha) + 2.0 / alpha));
    s = lambda == 0.0 ? via_alpha : std::min(1.0 / lambda, via_alpha);
  }

  const double eta = -gig_psi(t, alpha, lambda);
  const double zeta = -gig_dpsi(t, alpha, lambda);
  const double theta = -gig_psi(-s, alpha, lambda);
  const double xi = gig_dpsi(-s, alpha, lambda);
  const double p = 1.0 / xi;
  const double r = 1.0 / zeta;
  const double td = t - r * eta;
  const double sd = s - p * theta;
  const double q = td + sd;

  double draw = 0.0;
  for (;;) {
    const double u = std_uniform(rng);
    const double v = std_uniform(rng);
    const double w = std_uniform(rng);
    if (u < q / (p + q + r)) {
      draw = -sd + q * v;
    } else if (u < (q + r) / (p + q + r)) {
      draw = td - r * std::log(v);
    } else {
      draw = -sd + p * std::log(v);
    }
    double envelope = 1.0;
    if (draw > td) {
      envelope = std::exp(-eta - zeta * (draw - t));
    } else if (draw < -sd) {
      envelope = std::exp(-theta + xi * (draw + s));
    }
    if (w * envelope <= std::exp(gig_psi(draw, alpha, lambda))) break;
  }
  return std::exp(draw) * (lambda / omega + std::sqrt(1.0 + lambda * lambda / (omega * omega)));
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = splitmix64(a);
  h = splitmix64(h ^ b);
  h = splitmix64(h ^ c);
  return base ^ h;
}

double std_normal(Rng& rng) {
  static thread_local std::normal_distribution<double> dist(0.0, 1.0);
  // The distribution caches a second variate; reset so draws depend only on rng.
  dist.reset();
  return dist(rng);
}

double std_uniform(Rng& rng) {
  for (;;) {
    const double u = std::generate_canonical<double, 53>(rng);
    if (u > 0.0) return u;
  }
}

double std_exponential(Rng& rng) { return -std::log(std_uniform(rng)); }

double gamma_sample(double shape, double rate, Rng& rng) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw ValidationError("gamma_sample: shape and rate must be > 0");
  std::gamma_distribution<double> dist(shape, 1.0 / rate);
  return dist(rng);
}

double chi_squared_sample(double dof, Rng& rng) { return gamma_sample(0.5 * dof, 0.5, rng); }

double trunc_normal_sample(double mean, double sd, double lower, Rng& rng) {
  if (!(sd > 0.0)) throw ValidationError("trunc_normal_sample: sd must be > 0");
  if (lower == -std::numeric_limits<double>::infinity()) return mean + sd * std_normal(rng);
  const double a = (lower - mean) / sd;
  if (std::isnan(a) || a == std::numeric_limits<double>::infinity())
    throw ValidationError("trunc_normal_sample: non-finite truncation point");
  return mean + sd * std_trunc_lower(a, rng);
}

double trunc_normal_sample(double mean, double sd, double lower, double upper, Rng& rng) {
  if (!(sd > 0.0)) throw ValidationError("trunc_normal_sample: sd must be > 0");
  if (!(lower < upper)) throw ValidationError("trunc_normal_sample: empty interval");
  if (upper == std::numeric_limits<double>::infinity()) return trunc_normal_sample(mean, sd, lower, rng);
  if (lower == -std::numeric_limits<double>::infinity())
    return -trunc_normal_sample(-mean, sd, -upper, rng);
  const double a = (lower - mean) / sd, b = (upper - mean) / sd;
  if (!std::isfinite(a) || !std::isfinite(b)) throw ValidationError("trunc_normal_sample: non-finite truncation point");
  return mean + sd * std_trunc_interval(a, b, rng);
}

double gig_sample(double lambda, double chi, double psi, Rng& rng) {
  if (!(chi > 0.0) || !(psi > 0.0) || !std::isfinite(lambda))
    throw ValidationError("gig_sample: chi and psi must be > 0");
  if (!std::isfinite(chi) || !std::isfinite(psi)) throw ValidationError("gig_sample: chi and psi must be finite");
  const double omega = std::sqrt(chi * psi);
  const double scale = std::sqrt(chi / psi);
  if (omega < 1e-10) {
    // Degenerate limits: Gamma for lambda > 0, inverse Gamma for lambda < 0.
    if (lambda > 0.0) return gamma_sample(lambda, 0.5 * psi, rng);
    if (lambda < 0.0) return 1.0 / gamma_sample(-lambda, 0.5 * chi, rng);
  }
  if (lambda < 0.0) return scale / gig_two_parameter(-lambda, omega, rng);
  return scale * gig_two_parameter(lambda, omega, rng);
}

int categorical_log_sample(std::span<const double> log_weights, Rng& rng) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : log_weights) m = std::max(m, v);
  double total = 0.0;
  for (double v : log_weights) total += std::exp(v - m);
  double u = std_uniform(rng) * total;
  const int k = static_cast<int>(log_weights.size());
  for (int i = 0; i < k; ++i) {
    u -= std::exp(log_weights[i] - m);
    if (u <= 0.0) return i;
  }
  return k - 1;
}

Eigen::VectorXd dirichlet_sample(const Eigen::VectorXd& concentration, Rng& rng) {
  Eigen::VectorXd g(concentration.size());
  for (Eigen::Index k = 0; k < g.size(); ++k) g[k] = gamma_sample(concentration[k], 1.0, rng);
  const double total = g.sum();
  if (total > 0.0) return g / total;
  // All shapes tiny and every gamma underflowed; fall back to a one-hot draw.
  g.setZero();
  g[static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(g.size()))] = 1.0;
  return g;
}

bool mvn_canonical_sample(const Eigen::MatrixXd& precision, const Eigen::VectorXd& linear, Rng& rng,
                          Eigen::VectorXd& out) {
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) return false;
  Eigen::VectorXd z(linear.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = std_normal(rng);
  const Eigen::VectorXd mean = llt.solve(linear);
  out = mean + llt.matrixU().solve(z);
  return out.allFinite();
}

Eigen::VectorXd mvn_sample(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw ValidationError("mvn_sample: covariance not positive definite");
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = std_normal(rng);
  return mean + llt.matrixL() * z;
}

Eigen::MatrixXd inv_wishart_sample(double dof, const Eigen::MatrixXd& scale, Rng& rng) {
  const Eigen::Index d = scale.rows();
  if (!(dof > static_cast<double>(d) - 1.0)) throw ValidationError("inv_wishart_sample: dof too small");
  // Sigma^{-1} ~ Wishart(dof, scale^{-1}) = L A A' L' with L L' = scale^{-1}.
  Eigen::LLT<Eigen::MatrixXd> scale_llt(scale);
  if (scale_llt.info() != Eigen::Success)
    throw ValidationError("inv_wishart_sample: scale not positive definite");
  const Eigen::MatrixXd scale_inv = scale_llt.solve(Eigen::MatrixXd::Identity(d, d));
  Eigen::LLT<Eigen::MatrixXd> inv_llt(scale_inv);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(chi_squared_sample(dof - static_cast<double>(i), rng));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = std_normal(rng);
  }
  const Eigen::MatrixXd la = inv_llt.matrixL() * a;
  const Eigen::MatrixXd wishart = la * la.transpose();
  Eigen::LLT<Eigen::MatrixXd> w_llt(wishart);
  Eigen::MatrixXd out = w_llt.solve(Eigen::MatrixXd::Identity(d, d));
  return 0.5 * (out + out.transpose());
}

}  // namespace sofqr
