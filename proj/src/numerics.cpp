#include "sofqr/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace sofqr {

namespace {

// Phi(-t) / phi(t) for t > 0 by Lentz's continued fraction
// R(t) = 1/(t + 1/(t + 2/(t + 3/(t + ...)))).
double mills_ratio(double t) {
  constexpr double tiny = 1e-300;
  double f = t;
  double c = t;
  double d = 0.0;
  for (int k = 1; k < 500; ++k) {
    d = t + k * d;
    if (std::abs(d) < tiny) d = tiny;
    c = t + k / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return 1.0 / f;
}

}  // namespace

double norm_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double norm_logpdf(double x) { return -0.5 * (x * x + kLog2Pi); }

double log_norm_cdf(double x) {
  if (std::isnan(x)) return x;
  if (x > 5.0) return std::log1p(-0.5 * std::erfc(x / kSqrt2));
  if (x > -8.0) return std::log(0.5 * std::erfc(-x / kSqrt2));
  if (std::isinf(x)) return -std::numeric_limits<double>::infinity();
  return norm_logpdf(x) + std::log(mills_ratio(-x));
}

double log_norm_cdf_diff(double a, double b) {
  if (!(a < b)) return -std::numeric_limits<double>::infinity();
  if (a > 0.0) {
    // Upper tail: Phi(b) - Phi(a) = Phi(-a) - Phi(-b).
    const double la = log_norm_cdf(-a);
    const double lb = log_norm_cdf(-b);
    return la + std::log1p(-std::exp(lb - la));
  }
  if (b < 0.0) {
    const double la = log_norm_cdf(a);
    const double lb = log_norm_cdf(b);
    return lb + std::log1p(-std::exp(la - lb));
  }
  // Straddles zero: the difference is at least of order min(|a|, b).
  return std::log(0.5 * (std::erf(b / kSqrt2) - std::erf(a / kSqrt2)));
}

double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

double log_sum_exp(std::span<const double> values) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : values) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

double empirical_quantile(std::span<const double> values, double p) {
  if (values.empty()) throw ValidationError("empirical_quantile: no values");
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("empirical_quantile: p must lie in [0, 1]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace sofqr
