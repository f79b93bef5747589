#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace testsupport {

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size() - 1);
}

inline double std_error(const std::vector<double>& v) { return std::sqrt(variance(v) / static_cast<double>(v.size())); }

/// sup_x |F_n(x) - F(x)|.
inline double ks_statistic(std::vector<double> v, const std::function<double(double)>& cdf) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = cdf(v[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

/// Two-sample statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

/// Asymptotic Kolmogorov tail probability with the Stephens correction.
inline double ks_pvalue(double d, double n_eff) {
  const double sn = std::sqrt(n_eff);
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

inline double ks_pvalue_two_sample(double d, double n, double m) { return ks_pvalue(d, n * m / (n + m)); }

/// Standard normal CDF in long double, used as an oracle independent of the library.
inline long double normal_cdf_ld(long double x) { return 0.5L * std::erfc(-x / std::sqrt(2.0L)); }

}  // namespace testsupport

namespace testsupport {

/// Standard error of the mean of an autocorrelated series by non-overlapping batch means.
inline double batch_means_se(const std::vector<double>& v, int batches = 50) {
  const std::size_t size = v.size() / static_cast<std::size_t>(batches);
  std::vector<double> means;
  for (int b = 0; b < batches; ++b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < size; ++i) acc += v[b * size + i];
    means.push_back(acc / static_cast<double>(size));
  }
  return std::sqrt(variance(means) / static_cast<double>(batches));
}

/// Standard error of the mean using Geyer's initial positive sequence for the
/// integrated autocorrelation time.
inline double iat_std_error(const std::vector<double>& v) {
  const std::size_t n = v.size();
  const double m = mean(v);
  auto autocov = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) acc += (v[i] - m) * (v[i + lag] - m);
    return acc / static_cast<double>(n);
  };
  const double c0 = autocov(0);
  double tau = -1.0;
  for (std::size_t lag = 0; lag + 1 < n; lag += 2) {
    const double pair = (autocov(lag) + autocov(lag + 1)) / c0;
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  return std::sqrt(c0 * std::max(tau, 1.0) / static_cast<double>(n));
}

}  // namespace testsupport
