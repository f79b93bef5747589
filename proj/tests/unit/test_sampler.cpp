#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "sofqr/numerics.hpp"
#include "sofqr/sampler.hpp"
#include "sofqr/simlab.hpp"
#include "test_support.hpp"

using namespace sofqr;
namespace ts = testsupport;

namespace {

SamplerData small_fixed_data(int n, int k, int p, double tau0, Rng& rng) {
  SamplerData d;
  d.tau0 = tau0;
  d.y = Eigen::VectorXd::Zero(n);
  d.z.resize(n, p);
  d.x_fixed.resize(n, k);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < p; ++c) d.z(i, c) = std_normal(rng);
    for (int c = 0; c < k; ++c) d.x_fixed(i, c) = std_normal(rng);
  }
  d.penalty = BasisSystem(Eigen::VectorXd::LinSpaced(20, 0.0, 1.0), k).penalty();
  return d;
}

struct GewekeResult {
  std::vector<std::vector<double>> series;  // beta_z[0..p), theta2, gamma, sigma
};

GewekeResult run_geweke(const PriorConfig& cfg, int sweeps, std::uint64_t seed) {
  Rng rng(seed);
  SamplerData data = small_fixed_data(30, 4, 2, 0.3, rng);
  const ResolvedPriors pr = resolve_priors(cfg, data, data.x_fixed, std::nullopt);
  // Start from a prior draw: beta, phi, theta, sigma, gamma and latents.
  ModelState st = initial_state(data, pr, GibbsMode::FixedX, data.x_fixed, rng);
  st.theta2 = std::pow(std_exponential(rng) / pr.theta_rate, 2);
  st.beta0 = std_normal(rng);
  st.beta_z = Eigen::VectorXd(2);
  st.beta_z << std_normal(rng), std_normal(rng);
  Eigen::VectorXd phi;
  REQUIRE(mvn_canonical_sample(pr.phi_penalty / st.theta2, Eigen::VectorXd::Zero(4), rng, phi));
  st.phi = phi;
  st.sigma[0] = gamma_sample(pr.sigma_shape, pr.sigma_rate, rng);
  if (!pr.fixed_gamma) st.gamma[0] = pr.bounds.lower + (pr.bounds.upper - pr.bounds.lower) * std_uniform(rng);
  const GalParams g(pr.tau0, st.gamma[0], st.sigma[0], pr.bounds);
  for (int i = 0; i < data.n(); ++i) {
    st.s[i] = st.sigma[0] * std::abs(std_normal(rng));
    st.nu[i] = st.sigma[0] * std_exponential(rng);
  }
  (void)g;

  GewekeResult out;
  out.series.resize(5);
  StepOptions adapt{true, 0.3};
  StepOptions frozen{false, 0.3};
  for (int it = 0; it < sweeps; ++it) {
    simulate_response(st, data, GibbsMode::FixedX, rng);
    gibbs_step(st, data, pr, GibbsMode::FixedX, it < 2000 ? adapt : frozen, rng);
    if (it < 2000) continue;
    out.series[0].push_back(st.beta_z[0]);
    out.series[1].push_back(st.beta_z[1]);
    out.series[2].push_back(st.theta2);
    out.series[3].push_back(st.gamma[0]);
    out.series[4].push_back(st.sigma[0]);
  }
  return out;
}

PriorConfig geweke_priors() {
  PriorConfig cfg;
  cfg.sigma_z0 = Eigen::MatrixXd::Identity(3, 3);
  cfg.penalty_ridge = 1.0;
  cfg.theta_rate = 1.5;
  cfg.K_eps = 1;
  cfg.sigma_shape = 3.0;
  cfg.sigma_rate = 2.0;
  return cfg;
}

double zscore(const std::vector<double>& chain, double exact) {
  return (ts::mean(chain) - exact) / ts::batch_means_se(chain);
}

}  // namespace

TEST_SUITE("sampler") {
  TEST_CASE("estimator names") {
    CHECK(estimator_from_string("FBQ") == Estimator::FBQ);
    CHECK(estimator_from_string("fast") == Estimator::Fast);
    CHECK(estimator_from_string("Naive") == Estimator::Naive);
    CHECK_THROWS_AS(estimator_from_string("bogus"), ValidationError);
    CHECK(to_string(Estimator::Fast) == "fast");
  }

  TEST_CASE("zero sweeps leave the initial state untouched") {
    Rng a(5), b(5);
    SamplerData data = small_fixed_data(20, 5, 1, 0.5, a);
    Rng r1(9), r2(9);
    const ResolvedPriors pr = resolve_priors(PriorConfig{}, data, data.x_fixed, std::nullopt);
    const ModelState s1 = initial_state(data, pr, GibbsMode::FixedX, data.x_fixed, r1);
    const ModelState s2 = initial_state(data, pr, GibbsMode::FixedX, data.x_fixed, r2);
    CHECK(s1.beta0 == s2.beta0);
    CHECK(s1.phi == s2.phi);
    CHECK(s1.eps_label == s2.eps_label);
    CHECK(s1.theta2 == 1.0);
    for (double g : s1.gamma) CHECK(g == 0.0);
    CHECK(s1.iteration == 0);
  }

  TEST_CASE("with no data the coefficient draws follow the prior") {
    Rng rng(6);
    SamplerData data = small_fixed_data(0, 5, 2, 0.5, rng);
    PriorConfig cfg;
    Eigen::MatrixXd sz(3, 3);
    sz << 2.0, 0.3, 0.0, 0.3, 1.0, -0.4, 0.0, -0.4, 3.0;
    cfg.sigma_z0 = sz;
    // Without data the P-spline prior alone is improper.
    cfg.penalty_ridge = 1.0;
    const ResolvedPriors pr = resolve_priors(cfg, data, data.x_fixed, std::nullopt);
    ModelState st = initial_state(data, pr, GibbsMode::FixedX, data.x_fixed, rng);
    std::vector<double> b1, b2, prod;
    const int sweeps = 50000;
    for (int it = 0; it < sweeps; ++it) {
      gibbs_step(st, data, pr, GibbsMode::FixedX, StepOptions{}, rng);
      b1.push_back(st.beta_z[0]);
      b2.push_back(st.beta_z[1]);
      prod.push_back(st.beta_z[0] * st.beta_z[1]);
    }
    CHECK(std::abs(ts::mean(b1)) < 3.0 * std::sqrt(1.0 / sweeps));
    CHECK(std::abs(ts::mean(b2)) < 3.0 * std::sqrt(3.0 / sweeps));
    CHECK(std::abs(ts::variance(b1) - 1.0) < 3.0 * std::sqrt(2.0 / sweeps));
    CHECK(std::abs(ts::variance(b2) - 3.0) < 3.0 * 3.0 * std::sqrt(2.0 / sweeps));
    const double cov_se = std::sqrt((1.0 * 3.0 + 0.16) / sweeps);
    CHECK(std::abs(ts::mean(prod) + 0.4) < 3.0 * cov_se);
  }

  TEST_CASE("getting it right: AL working likelihood") {
    PriorConfig cfg = geweke_priors();
    cfg.fixed_gamma = 0.0;
    const GewekeResult r = run_geweke(cfg, 50000, 101);
    const double lambda = 1.5;
    CHECK(std::abs(zscore(r.series[0], 0.0)) < 4.0);
    CHECK(std::abs(zscore(r.series[1], 0.0)) < 4.0);
    CHECK(std::abs(zscore(r.series[2], 2.0 / (lambda * lambda))) < 4.0);
    CHECK(std::abs(zscore(r.series[4], 3.0 / 2.0)) < 4.0);
  }

  TEST_CASE("getting it right: free GAL shape") {
    PriorConfig cfg = geweke_priors();
    const GewekeResult r = run_geweke(cfg, 50000, 202);
    const GammaBounds b = gamma_bounds(0.3);
    CHECK(std::abs(zscore(r.series[0], 0.0)) < 4.0);
    CHECK(std::abs(zscore(r.series[2], 2.0 / (1.5 * 1.5))) < 4.0);
    CHECK(std::abs(zscore(r.series[3], 0.5 * (b.lower + b.upper))) < 4.0);
    CHECK(std::abs(zscore(r.series[4], 3.0 / 2.0)) < 4.0);
    std::vector<double> sq;
    for (double g : r.series[3]) sq.push_back(g * g);
    const double second = (b.upper * b.upper * b.upper - b.lower * b.lower * b.lower) / (3.0 * (b.upper - b.lower));
    CHECK(std::abs(zscore(sq, second)) < 4.0);
  }

  TEST_CASE("sweeps preserve the state invariants in full mode") {
    SimConfig sc;
    sc.n = 60;
    sc.J = 3;
    sc.T = 40;
    Rng rng(7);
    const FunctionalDataset fd = generate_case(sc, rng);
    const BasisSystem basis(fd.grid, 6);
    SamplerData data;
    data.tau0 = 0.25;
    data.y = fd.Y;
    data.z = fd.Z;
    data.w_scores = replicate_scores(fd, basis);
    data.penalty = basis.penalty();
    const ScoreDataset rc = rc_calibrate(data.w_scores);
    const ResolvedPriors pr = resolve_priors(PriorConfig{}, data, rc.xhat_scores, moment_estimates(data.w_scores));
    ModelState st = initial_state(data, pr, GibbsMode::Full, rc.xhat_scores, rng);
    for (int it = 0; it < 200; ++it) {
      gibbs_step(st, data, pr, GibbsMode::Full, StepOptions{it < 100, 0.3}, rng);
      CHECK(std::abs(st.eps_weights.sum() - 1.0) < 1e-12);
      CHECK(std::abs(st.u_weights.sum() - 1.0) < 1e-12);
      CHECK(std::abs(st.x_weights.sum() - 1.0) < 1e-12);
      CHECK(st.eps_weights.minCoeff() >= 0.0);
      for (double g : st.gamma) {
        CHECK(g > pr.bounds.lower);
        CHECK(g < pr.bounds.upper);
      }
      Eigen::VectorXd centre = Eigen::VectorXd::Zero(6);
      for (int k = 0; k < pr.K_u; ++k) centre += st.u_weights[k] * st.u_mu[k];
      CHECK(centre.cwiseAbs().maxCoeff() < 1e-10);
      for (const auto& c : st.u_cov) CHECK(Eigen::LLT<Eigen::MatrixXd>(c).info() == Eigen::Success);
      for (const auto& c : st.x_cov) CHECK(Eigen::LLT<Eigen::MatrixXd>(c).info() == Eigen::Success);
      CHECK(st.X.allFinite());
    }
  }

  TEST_CASE("MVN mixture density is invariant to relabelling") {
    const Eigen::VectorXd w = (Eigen::VectorXd(2) << 0.3, 0.7).finished();
    std::vector<Eigen::VectorXd> mu{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)};
    std::vector<Eigen::MatrixXd> cov{Eigen::MatrixXd::Identity(2, 2), 2.0 * Eigen::MatrixXd::Identity(2, 2)};
    const Eigen::VectorXd x = (Eigen::VectorXd(2) << 0.4, -1.0).finished();
    const double a = mvn_mixture_logpdf(x, w, mu, cov);
    const Eigen::VectorXd w2 = (Eigen::VectorXd(2) << 0.7, 0.3).finished();
    const double b = mvn_mixture_logpdf(x, w2, {mu[1], mu[0]}, {cov[1], cov[0]});
    CHECK(a == doctest::Approx(b).epsilon(1e-14));
    const double direct = std::log(0.3 * std::exp(-0.5 * x.squaredNorm()) / (2 * M_PI) +
                                   0.7 * std::exp(-0.25 * (x.array() - 1.0).square().sum()) / (4 * M_PI));
    CHECK(a == doctest::Approx(direct).epsilon(1e-12));
  }

  TEST_CASE("AL quantile regression recovers slopes at three quantiles") {
    Rng rng(8);
    const int n = 2000, k = 5;
    SamplerData base = small_fixed_data(n, k, 2, 0.5, rng);
    const Eigen::VectorXd beta = (Eigen::VectorXd(2) << 1.0, -0.5).finished();
    const Eigen::VectorXd phi = Eigen::VectorXd::LinSpaced(k, 0.5, -0.5);
    Eigen::VectorXd y = 0.3 + (base.z * beta).array() + (base.x_fixed * phi).array();
    for (int i = 0; i < n; ++i) y[i] += std_normal(rng);
    const BasisSystem basis(Eigen::VectorXd::LinSpaced(20, 0.0, 1.0), k);
    PriorConfig cfg;
    cfg.K_eps = 1;
    cfg.fixed_gamma = 0.0;
    McmcConfig m;
    m.iters = 3000;
    m.burnin = 1000;
    m.seed = 3;
    for (double tau : {0.25, 0.5, 0.9}) {
      const PosteriorDraws d = fit_fixed_scores(base.x_fixed, base.z, y, basis, cfg, tau, Estimator::Naive, m);
      for (int c = 0; c < 2; ++c) {
        const Eigen::VectorXd col = d.beta_z.col(c);
        const std::vector<double> v(col.data(), col.data() + col.size());
        const double med = empirical_quantile(v, 0.5);
        INFO("tau=" << tau << " coef=" << c << " median=" << med);
        CHECK(std::abs(med - beta[c]) < 3.0 * std::sqrt(ts::variance(v)));
      }
    }
  }

  TEST_CASE("fit stores the expected draws and is reproducible") {
    SimConfig sc;
    sc.n = 80;
    sc.J = 2;
    sc.T = 40;
    Rng rng(9);
    const FunctionalDataset fd = generate_case(sc, rng);
    const BasisSystem basis(fd.grid, 8);
    McmcConfig m;
    m.iters = 400;
    m.burnin = 100;
    m.thin = 3;
    m.seed = 77;
    for (Estimator e : {Estimator::FBQ, Estimator::Fast, Estimator::Naive}) {
      const PosteriorDraws a = fit(fd, basis, PriorConfig{}, 0.5, e, m);
      const PosteriorDraws b = fit(fd, basis, PriorConfig{}, 0.5, e, m);
      CHECK(a.draws() == 100);
      CHECK(a.loglik.rows() == 80);
      CHECK(a.loglik.cols() == 100);
      CHECK(a.phi == b.phi);
      CHECK(a.beta0 == b.beta0);
      CHECK(a.loglik == b.loglik);
    }
    m.chains = 2;
    const PosteriorDraws two = fit(fd, basis, PriorConfig{}, 0.5, Estimator::Fast, m);
    CHECK(two.draws() == 200);
    McmcConfig single = m;
    single.chains = 1;
    const PosteriorDraws first = fit(fd, basis, PriorConfig{}, 0.5, Estimator::Fast, single);
    CHECK(two.phi.topRows(100) == first.phi);
  }

  TEST_CASE("fit validates its inputs") {
    SimConfig sc;
    sc.n = 30;
    sc.J = 1;
    sc.T = 30;
    Rng rng(10);
    const FunctionalDataset fd = generate_case(sc, rng);
    const BasisSystem basis(fd.grid, 6);
    McmcConfig m;
    m.iters = 50;
    m.burnin = 10;
    CHECK_THROWS_AS(fit(fd, basis, PriorConfig{}, 0.5, Estimator::FBQ, m), ValidationError);
    CHECK_THROWS_AS(fit(fd, basis, PriorConfig{}, 0.5, Estimator::Fast, m), ValidationError);
    CHECK_NOTHROW(fit(fd, basis, PriorConfig{}, 0.5, Estimator::Naive, m));
    m.burnin = 50;
    CHECK_THROWS_AS(fit(fd, basis, PriorConfig{}, 0.5, Estimator::Naive, m), ValidationError);
  }

  TEST_CASE("an overflowing response stops the chain with a divergence error") {
    SimConfig sc;
    sc.n = 40;
    sc.J = 2;
    sc.T = 30;
    Rng rng(14);
    FunctionalDataset fd = generate_case(sc, rng);
    for (int i = 0; i < 40; i += 2) fd.Y[i] = std::numeric_limits<double>::max();
    const BasisSystem basis(fd.grid, 6);
    McmcConfig m;
    m.iters = 50;
    m.burnin = 10;
    CHECK_THROWS_AS(fit(fd, basis, PriorConfig{}, 0.5, Estimator::Naive, m), DivergenceError);
  }

  TEST_CASE("naive and fast agree on noise-free replicates") {
    SimConfig sc;
    sc.n = 150;
    sc.J = 2;
    sc.T = 40;
    sc.sigma_u = 0.0;
    Rng rng(11);
    const FunctionalDataset fd = generate_case(sc, rng);
    const BasisSystem basis(fd.grid, 6);
    McmcConfig m;
    m.iters = 41000;
    m.burnin = 1000;
    m.seed = 5;
    m.store_loglik = false;
    const PosteriorDraws naive = fit(fd, basis, PriorConfig{}, 0.5, Estimator::Naive, m);
    m.seed = 6;
    const PosteriorDraws fast = fit(fd, basis, PriorConfig{}, 0.5, Estimator::Fast, m);
    for (int k = 0; k < 6; ++k) {
      const Eigen::VectorXd a = naive.phi.col(k), b = fast.phi.col(k);
      const std::vector<double> va(a.data(), a.data() + a.size()), vb(b.data(), b.data() + b.size());
      const double se = std::hypot(ts::iat_std_error(va), ts::iat_std_error(vb));
      CHECK(std::abs(ts::mean(va) - ts::mean(vb)) < 4.0 * se);
    }
  }

  TEST_CASE("MH acceptance settles inside (0.1, 0.7) on case-1 data") {
    SimConfig sc;
    sc.n = 500;
    Rng rng(12);
    const FunctionalDataset fd = generate_case(sc, rng);
    const BasisSystem basis(fd.grid, default_num_basis(fd.T()));
    McmcConfig m;
    m.iters = 3000;
    m.burnin = 1000;
    m.seed = 21;
    const PosteriorDraws d = fit(fd, basis, PriorConfig{}, 0.5, Estimator::Fast, m);
    Eigen::Index top = 0;
    d.gal_weights.colwise().mean().maxCoeff(&top);
    const double acc = d.mh_acceptance[static_cast<std::size_t>(top)];
    INFO("acceptance of the dominant component " << acc);
    CHECK(acc > 0.1);
    CHECK(acc < 0.7);
  }

  TEST_CASE("WAIC identities") {
    Eigen::MatrixXd constant = Eigen::MatrixXd::Constant(4, 10, -1.25);
    CHECK(waic(constant) == doctest::Approx(-2.0 * 4 * -1.25).epsilon(1e-14));
    Rng rng(13);
    Eigen::MatrixXd ll(6, 50);
    for (Eigen::Index i = 0; i < ll.size(); ++i) ll.data()[i] = -1.0 + 0.3 * std_normal(rng);
    Eigen::MatrixXd twice(6, 100);
    twice << ll, ll;
    CHECK(waic(twice) == doctest::Approx(waic(ll)).epsilon(1e-13));
    // Direct formula.
    double lppd = 0.0, pw = 0.0;
    for (int i = 0; i < 6; ++i) {
      lppd += std::log(ll.row(i).array().exp().mean());
      const double m = ll.row(i).mean();
      pw += (ll.row(i).array() - m).square().mean();
    }
    CHECK(waic(ll) == doctest::Approx(-2.0 * (lppd - pw)).epsilon(1e-12));
    CHECK_THROWS_AS(waic(Eigen::MatrixXd::Zero(3, 1)), ValidationError);
  }

  TEST_CASE("WAIC penalizes pure-noise covariates") {
    const int reps = 20, n = 200, k = 5, noise = 20;
    int worse = 0;
    for (int r = 0; r < reps; ++r) {
      Rng rng(derive_seed(99, r));
      SamplerData base = small_fixed_data(n, k, 1, 0.5, rng);
      Eigen::VectorXd y = 0.5 + 2.0 * base.z.col(0).array() + (base.x_fixed * Eigen::VectorXd::Constant(k, 0.3)).array();
      for (int i = 0; i < n; ++i) y[i] += std_normal(rng);
      Eigen::MatrixXd noisy(n, 1 + noise);
      noisy.col(0) = base.z.col(0);
      for (int c = 1; c <= noise; ++c)
        for (int i = 0; i < n; ++i) noisy(i, c) = std_normal(rng);
      const BasisSystem basis(Eigen::VectorXd::LinSpaced(20, 0.0, 1.0), k);
      McmcConfig m;
      m.iters = 3000;
      m.burnin = 1000;
      m.seed = derive_seed(7, r);
      PriorConfig cfg;
      cfg.K_eps = 1;
      cfg.fixed_gamma = 0.0;
      const double w_small = waic(fit_fixed_scores(base.x_fixed, base.z, y, basis, cfg, 0.5, Estimator::Naive, m));
      const double w_big = waic(fit_fixed_scores(base.x_fixed, noisy, y, basis, cfg, 0.5, Estimator::Naive, m));
      if (w_big > w_small) ++worse;
    }
    INFO("noise model worse in " << worse << " of " << reps);
    CHECK(worse >= 18);
  }
}
