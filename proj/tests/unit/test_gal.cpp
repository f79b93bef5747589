#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "sofqr/gal.hpp"
#include "sofqr/numerics.hpp"
#include "test_support.hpp"

using namespace sofqr;
namespace ts = testsupport;

namespace {

long double h_oracle(long double g) {
  return 2.0L * ts::normal_cdf_ld(-std::fabs(g)) * std::exp(0.5L * g * g);
}

// Bisection on the long-double oracle, independent of the library root solver.
long double root_oracle(long double target) {
  long double lo = 0.0L, hi = 40.0L;
  for (int i = 0; i < 200; ++i) {
    const long double mid = 0.5L * (lo + hi);
    if (h_oracle(mid) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5L * (lo + hi);
}

struct Masses {
  double left, right;
};

Masses quadrature_masses(const GalParams& g) {
  boost::math::quadrature::exp_sinh<double> q;
  auto f = [&](double x) { return std::exp(gal_logpdf(x, g)); };
  const double inf = std::numeric_limits<double>::infinity();
  return {q.integrate(f, -inf, 0.0), q.integrate(f, 0.0, inf)};
}

double al_logpdf(double x, double tau, double sigma) {
  const double z = x / sigma;
  const double rho = z * (tau - (z < 0 ? 1.0 : 0.0));
  return std::log(tau * (1.0 - tau) / sigma) - rho;
}

double al_inverse_cdf(double u, double tau, double sigma) {
  if (u < tau) return sigma * std::log(u / tau) / (1.0 - tau);
  return -sigma * std::log((1.0 - u) / (1.0 - tau)) / tau;
}

}  // namespace

TEST_SUITE("gal") {
  TEST_CASE("h at fixed points and its symmetry") {
    CHECK(h_of_gamma(0.0) == 1.0);
    CHECK(std::abs(h_of_gamma(1.7) - h_of_gamma(-1.7)) <= 1e-15);
    CHECK(h_of_gamma(1.0) == doctest::Approx(static_cast<double>(h_oracle(1.0L))).epsilon(1e-13));
    CHECK(h_of_gamma(1.0) == doctest::Approx(0.5233).epsilon(1e-4));
    CHECK(h_of_gamma(30.0) == doctest::Approx(static_cast<double>(h_oracle(30.0L))).epsilon(1e-10));
    CHECK_THROWS_AS(h_of_gamma(std::numeric_limits<double>::quiet_NaN()), ValidationError);
  }

  TEST_CASE("h is strictly decreasing in |gamma| and tends to zero") {
    double prev = h_of_gamma(0.0);
    for (double g = 0.05; g <= 30.0; g += 0.05) {
      const double cur = h_of_gamma(g);
      CHECK(cur < prev);
      prev = cur;
    }
    CHECK(prev < 0.03);
  }

  TEST_CASE("gamma bounds match an independent bisection") {
    const GammaBounds b = gamma_bounds(0.5);
    CHECK(b.lower == doctest::Approx(-b.upper).epsilon(1e-12));
    CHECK(b.upper == doctest::Approx(static_cast<double>(root_oracle(0.5L))).epsilon(1e-10));
    CHECK(b.upper == doctest::Approx(1.09).epsilon(0.01));
    for (double tau0 : {0.1, 0.25, 0.9}) {
      const GammaBounds bb = gamma_bounds(tau0);
      CHECK(std::abs(h_of_gamma(bb.upper) - tau0) < 1e-10);
      CHECK(std::abs(h_of_gamma(bb.lower) - (1.0 - tau0)) < 1e-10);
    }
    for (int i = 1; i <= 99; ++i) {
      const GammaBounds bb = gamma_bounds(i / 100.0);
      CHECK(bb.lower < 0.0);
      CHECK(bb.upper > 0.0);
    }
    CHECK_THROWS_AS(gamma_bounds(0.0), ValidationError);
    CHECK_THROWS_AS(gamma_bounds(1.0), ValidationError);
  }

  TEST_CASE("adjust_tau") {
    CHECK(adjust_tau(0.25, 0.0) == 0.25);
    CHECK(adjust_tau(0.5, 0.5) == doctest::Approx(0.5 / static_cast<double>(h_oracle(0.5L))).epsilon(1e-13));
    const GammaBounds b = gamma_bounds(0.3);
    const double near = adjust_tau(0.3, b.upper * (1 - 1e-9));
    CHECK(near < 1.0);
    CHECK(near > 0.999);
    CHECK_THROWS_AS(adjust_tau(0.3, b.upper * 1.01), ValidationError);
    CHECK_THROWS_AS(adjust_tau(0.3, b.lower * 1.01), ValidationError);
  }

  TEST_CASE("density normalizes and puts tau0 mass left of zero") {
    for (double tau0 : {0.05, 0.3, 0.5, 0.75, 0.95}) {
      const GammaBounds b = gamma_bounds(tau0);
      for (double frac : {-0.95, -0.4, 0.0, 0.5, 0.95}) {
        const double gamma = frac < 0 ? -frac * b.lower : frac * b.upper;
        for (double sigma : {0.5, 5.0}) {
          const GalParams g(tau0, gamma, sigma);
          const Masses m = quadrature_masses(g);
          INFO("tau0=" << tau0 << " gamma=" << gamma << " sigma=" << sigma);
          CHECK(std::abs(m.left + m.right - 1.0) < 1e-6);
          CHECK(std::abs(m.left - tau0) < 1e-5);
        }
      }
    }
  }

  TEST_CASE("gamma = 0 is the asymmetric Laplace density") {
    for (double tau0 : {0.1, 0.5, 0.8}) {
      const GalParams g(tau0, 0.0, 1.7);
      for (double x = -20.0; x <= 20.0; x += 0.37) {
        CHECK(std::abs(gal_logpdf(x, g) - al_logpdf(x, tau0, 1.7)) < 1e-10);
      }
    }
  }

  TEST_CASE("density reflects under tau0 -> 1 - tau0, gamma -> -gamma") {
    const GalParams a(0.3, 0.4, 1.2);
    const GalParams b(0.7, -0.4, 1.2);
    for (double x = -8.0; x <= 8.0; x += 0.5) CHECK(gal_logpdf(x, a) == doctest::Approx(gal_logpdf(-x, b)).epsilon(1e-12));
  }

  TEST_CASE("log pieces sum to the density") {
    const GalParams g(0.25, 0.6, 2.0);
    for (double x : {-10.0, -0.3, 0.0, 0.4, 3.0, 25.0}) {
      const GalPieces p = gal_log_pieces(x, g);
      CHECK(log_add_exp(p.log_lower, p.log_upper) - std::log(2.0) == doctest::Approx(gal_logpdf(x, g)).epsilon(1e-12));
    }
  }

  TEST_CASE("density stays finite far in both tails") {
    const GammaBounds b = gamma_bounds(0.9);
    const GalParams g(0.9, 0.9 * b.upper, 1.0);
    for (double x : {-1e4, -300.0, 300.0, 1e4}) CHECK(std::isfinite(gal_logpdf(x, g)));
  }

  TEST_CASE("gamma = 0 draws match AL inverse-CDF draws") {
    Rng rng(31);
    const GalParams g(0.25, 0.0, 1.0);
    std::vector<double> a(100000), b(100000);
    for (auto& x : a) x = gal_sample(g, rng);
    for (auto& x : b) x = al_inverse_cdf(std_uniform(rng), 0.25, 1.0);
    CHECK(ts::ks_pvalue_two_sample(ts::ks_statistic(a, b), a.size(), b.size()) > 0.01);
  }

  TEST_CASE("empirical tau0-quantile of draws is zero") {
    Rng rng(32);
    const double tau0 = 0.25;
    const GammaBounds b = gamma_bounds(tau0);
    const GalParams g(tau0, 0.6 * b.upper, 1.0);
    const std::size_t n = 1000000;
    std::vector<double> d(n);
    for (auto& x : d) x = gal_sample(g, rng);
    const double q = empirical_quantile(d, tau0);
    const double se = std::sqrt(tau0 * (1 - tau0) / n) / std::exp(gal_logpdf(0.0, g));
    CHECK(std::abs(q) < 3.0 * se);
  }

  TEST_CASE("sigma is a scale parameter") {
    Rng rng(33);
    const GalParams one(0.6, -0.3, 1.0);
    const GalParams two(0.6, -0.3, 2.0);
    std::vector<double> a(50000), b(50000);
    for (auto& x : a) x = 2.0 * gal_sample(one, rng);
    for (auto& x : b) x = gal_sample(two, rng);
    CHECK(ts::ks_pvalue_two_sample(ts::ks_statistic(a, b), a.size(), b.size()) > 0.01);
  }

  TEST_CASE("mixture reduces to its component and validates input") {
    const GalParams g(0.5, 0.3, 1.0);
    const GalMixture one({1.0}, {g});
    const GalMixture twin({0.5, 0.5}, {g, g});
    for (double x : {-3.0, 0.0, 2.0}) {
      CHECK(galmix_logpdf(x, one) == gal_logpdf(x, g));
      CHECK(galmix_logpdf(x, twin) == doctest::Approx(gal_logpdf(x, g)).epsilon(1e-14));
    }
    CHECK_THROWS_AS(GalMixture({0.5, 0.6}, {g, g}), ValidationError);
    CHECK_THROWS_AS(GalMixture({0.5, 0.5}, {g, GalParams(0.4, 0.0, 1.0)}), ValidationError);
  }

  TEST_CASE("mixture is invariant to component relabelling and normalizes") {
    const GalParams a(0.4, -0.5, 0.7), b(0.4, 0.8, 3.0), c(0.4, 0.0, 1.5);
    const GalMixture m1({0.2, 0.3, 0.5}, {a, b, c});
    const GalMixture m2({0.5, 0.2, 0.3}, {c, a, b});
    for (double x = -6.0; x <= 6.0; x += 0.75) CHECK(galmix_logpdf(x, m1) == doctest::Approx(galmix_logpdf(x, m2)).epsilon(1e-14));
    boost::math::quadrature::exp_sinh<double> q;
    auto f = [&](double x) { return std::exp(galmix_logpdf(x, m1)); };
    const double inf = std::numeric_limits<double>::infinity();
    const double left = q.integrate(f, -inf, 0.0);
    CHECK(std::abs(left + q.integrate(f, 0.0, inf) - 1.0) < 1e-6);
    CHECK(std::abs(left - 0.4) < 1e-5);
  }
}
