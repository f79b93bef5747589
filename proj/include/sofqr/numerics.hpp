#pragma once

#include <span>
#include <stdexcept>
#include <string>

namespace sofqr {

/// Raised for invalid user input (bad parameters, malformed data).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a Markov chain reaches a non-finite or non-PD state.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, long iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

inline constexpr double kLog2Pi = 1.8378770664093454836;
inline constexpr double kSqrt2 = 1.4142135623730950488;

double norm_cdf(double x);
double norm_logpdf(double x);

/// log Phi(x). Uses erfc down to x = -8 and the Mills-ratio continued
/// fraction below, so the result stays relative-accurate far in the tail.
double log_norm_cdf(double x);

/// log(Phi(b) - Phi(a)) for a < b, computed on whichever tail is smaller.
double log_norm_cdf_diff(double a, double b);

/// log(exp(a) + exp(b)).
double log_add_exp(double a, double b);
double log_sum_exp(std::span<const double> values);

/// Linear-interpolation sample quantile (type 7) of unsorted values.
double empirical_quantile(std::span<const double> values, double p);

}  // namespace sofqr
