#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "sofqr/numerics.hpp"
#include "test_support.hpp"

using namespace sofqr;

TEST_SUITE("numerics") {
  TEST_CASE("norm_cdf agrees with a long-double erfc") {
    for (double x : {-30.0, -8.5, -3.0, -0.4, 0.0, 0.7, 2.5, 7.0}) {
      const double expect = static_cast<double>(testsupport::normal_cdf_ld(x));
      CHECK(norm_cdf(x) == doctest::Approx(expect).epsilon(1e-13));
    }
  }

  TEST_CASE("log_norm_cdf is relative-accurate in the far left tail") {
    for (double x : {-9.0, -15.0, -40.0, -200.0}) {
      // Asymptotic Mills series, summed until the terms stop shrinking.
      const double x2 = x * x;
      double series = 1.0, term = 1.0;
      for (int k = 1; k < 40; ++k) {
        const double next = -term * (2.0 * k - 1.0) / x2;
        if (std::abs(next) >= std::abs(term)) break;
        term = next;
        series += term;
      }
      const double oracle = -0.5 * x2 - 0.5 * std::log(2.0 * M_PI) - std::log(-x) + std::log(series);
      const double tol = x < -14.0 ? 1e-12 : 1e-9;
      CHECK(log_norm_cdf(x) == doctest::Approx(oracle).epsilon(tol));
    }
    CHECK(log_norm_cdf(-2.0) == doctest::Approx(std::log(0.5 * std::erfc(2.0 / std::sqrt(2.0)))).epsilon(1e-14));
    CHECK(log_norm_cdf(6.0) == doctest::Approx(std::log1p(-0.5 * std::erfc(6.0 / std::sqrt(2.0)))).epsilon(1e-12));
  }

  TEST_CASE("log_norm_cdf_diff on central and tail intervals") {
    auto q = [](double x) { return 0.5 * boost::math::erfc(x / std::sqrt(2.0)); };
    CHECK(log_norm_cdf_diff(-1.0, 2.0) == doctest::Approx(std::log(1.0 - q(2.0) - q(1.0))).epsilon(1e-12));
    CHECK(log_norm_cdf_diff(10.0, 11.0) == doctest::Approx(std::log(q(10.0) - q(11.0))).epsilon(1e-12));
    CHECK(log_norm_cdf_diff(-11.0, -10.0) == doctest::Approx(std::log(q(10.0) - q(11.0))).epsilon(1e-12));
    CHECK(log_norm_cdf_diff(-1e-3, 1e-3) ==
          doctest::Approx(std::log(std::erf(1e-3 / std::sqrt(2.0)))).epsilon(1e-12));
    CHECK(log_norm_cdf_diff(0.0, std::numeric_limits<double>::infinity()) == doctest::Approx(std::log(0.5)));
  }

  TEST_CASE("log_sum_exp and log_add_exp") {
    const std::vector<double> v{-1000.0, -1000.0};
    CHECK(log_sum_exp(v) == doctest::Approx(-1000.0 + std::log(2.0)));
    CHECK(log_add_exp(-std::numeric_limits<double>::infinity(), 3.0) == 3.0);
    CHECK(log_add_exp(1.0, 2.0) == doctest::Approx(std::log(std::exp(1.0) + std::exp(2.0))));
    const std::vector<double> empty_mass{-std::numeric_limits<double>::infinity()};
    CHECK(log_sum_exp(empty_mass) == -std::numeric_limits<double>::infinity());
  }

  TEST_CASE("empirical_quantile uses linear interpolation between order statistics") {
    const std::vector<double> v{4.0, 1.0, 3.0, 2.0, 5.0};
    CHECK(empirical_quantile(v, 0.0) == 1.0);
    CHECK(empirical_quantile(v, 1.0) == 5.0);
    CHECK(empirical_quantile(v, 0.5) == 3.0);
    CHECK(empirical_quantile(v, 0.1) == doctest::Approx(1.4));
    CHECK_THROWS_AS(empirical_quantile(std::vector<double>{}, 0.5), ValidationError);
  }
}
