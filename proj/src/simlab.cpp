#include "sofqr/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "sofqr/basis.hpp"
#include "sofqr/numerics.hpp"

namespace sofqr {

double BetaSpec::operator()(double t) const {
  const double c0 = coefs.empty() ? 0.0 : coefs.front();
  if (form == "sine") return c0 * std::sin(2.0 * std::numbers::pi * t);
  if (form == "cosine") return c0 * std::cos(2.0 * std::numbers::pi * t);
  if (form == "zero") return 0.0;
  if (form == "polynomial") {
    double acc = 0.0;
    for (auto it = coefs.rbegin(); it != coefs.rend(); ++it) acc = acc * t + *it;
    return acc;
  }
  throw ValidationError("unknown beta form '" + form + "' (sine, cosine, polynomial, zero)");
}

Eigen::VectorXd BetaSpec::evaluate(const Eigen::VectorXd& grid) const {
  Eigen::VectorXd out(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) out[i] = (*this)(grid[i]);
  return out;
}

void SimConfig::validate() const {
  if (n < 1) throw ValidationError("simulation: n must be >= 1");
  if (J < 1) throw ValidationError("simulation: J must be >= 1");
  if (T < 5) throw ValidationError("simulation: T must be >= 5");
  if (!(sigma_x > 0.0)) throw ValidationError("simulation: sigma_x must be > 0");
  if (!(sigma_u >= 0.0)) throw ValidationError("simulation: sigma_u must be >= 0");
  if (!(std::abs(rho_x) < 1.0) || !(std::abs(rho_u) < 1.0)) throw ValidationError("simulation: |rho| must be < 1");
  if (error.dist == ErrorDist::Normal && !(error.sigma_e >= 0.0))
    throw ValidationError("simulation: sigma_e must be >= 0");
  if (error.dist == ErrorDist::SkewT && !(error.dof > 0.0)) throw ValidationError("simulation: dof must be > 0");
  if (n_r < 1) throw ValidationError("simulation: n_r must be >= 1");
  for (double t : tau0) {
    if (!(t > 0.0 && t < 1.0)) throw ValidationError("simulation: tau0 values must lie in (0, 1)");
  }
  (void)beta_true(0.5);
}

double default_x_mean(double t) { return (std::sin(2.0 * std::numbers::pi * t) + 1.25) / 2.0; }

Eigen::VectorXd sim_gp_exchangeable(const std::function<double(double)>& meanfn, double sigma, double rho,
                                    const Eigen::VectorXd& grid, Rng& rng) {
  if (!(sigma > 0.0)) throw ValidationError("sim_gp_exchangeable: sigma must be > 0");
  if (!(rho < 1.0)) throw ValidationError("sim_gp_exchangeable: rho must be < 1");
  if (rho < 0.0) throw ValidationError("sim_gp_exchangeable: rho must be >= 0 for the shared-factor construction");
  const double shared = std::sqrt(rho) * std_normal(rng);
  const double own = std::sqrt(1.0 - rho);
  Eigen::VectorXd out(grid.size());
  for (Eigen::Index t = 0; t < grid.size(); ++t) {
    out[t] = meanfn(grid[t]) + sigma * (shared + own * std_normal(rng));
  }
  return out;
}

double skew_t_sample(double xi, double dof, double slant, Rng& rng) {
  if (!(dof > 0.0)) throw ValidationError("skew_t_sample: dof must be > 0");
  const double delta = slant / std::sqrt(1.0 + slant * slant);
  const double z0 = std::abs(std_normal(rng));
  const double z1 = std_normal(rng);
  const double w = chi_squared_sample(dof, rng);
  return xi + (delta * z0 + std::sqrt(1.0 - delta * delta) * z1) / std::sqrt(w / dof);
}

double skew_t_pdf(double x, double xi, double dof, double slant) {
  const double z = x - xi;
  const boost::math::students_t_distribution<double> t(dof);
  const boost::math::students_t_distribution<double> t1(dof + 1.0);
  const double arg = slant * z * std::sqrt((dof + 1.0) / (dof + z * z));
  return 2.0 * boost::math::pdf(t, z) * boost::math::cdf(t1, arg);
}

double skew_t_cdf(double x, double xi, double dof, double slant) {
  if (!std::isfinite(x)) return x > 0 ? 1.0 : 0.0;
  boost::math::quadrature::exp_sinh<double> integrator;
  auto f = [&](double s) { return skew_t_pdf(s, xi, dof, slant); };
  const double inf = std::numeric_limits<double>::infinity();
  // Integrate over the lighter side for accuracy.
  if (x <= xi) return integrator.integrate(f, -inf, x);
  return 1.0 - integrator.integrate(f, x, inf);
}

double skew_t_quantile(double p, double xi, double dof, double slant) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("skew_t_quantile: p must lie in (0, 1)");
  auto g = [&](double x) { return skew_t_cdf(x, xi, dof, slant) - p; };
  double lo = xi - 1.0;
  double hi = xi + 1.0;
  while (g(lo) > 0.0) lo = xi + 2.0 * (lo - xi);
  while (g(hi) < 0.0) hi = xi + 2.0 * (hi - xi);
  boost::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(g, lo, hi, boost::math::tools::eps_tolerance<double>(50), iters);
  return 0.5 * (r.first + r.second);
}

double error_sample(const ErrorModel& model, Rng& rng) {
  if (model.dist == ErrorDist::SkewT) return skew_t_sample(model.xi, model.dof, model.slant, rng);
  return model.sigma_e * std_normal(rng);
}

double error_quantile(const ErrorModel& model, double tau) {
  if (model.dist == ErrorDist::SkewT) return skew_t_quantile(tau, model.xi, model.dof, model.slant);
  if (model.sigma_e == 0.0) return 0.0;
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, model.sigma_e), tau);
}

Eigen::VectorXd equispaced_grid(int T) {
  if (T < 2) throw ValidationError("grid needs T >= 2");
  return Eigen::VectorXd::LinSpaced(T, 0.0, 1.0);
}

FunctionalDataset generate_case(const SimConfig& cfg, Rng& rng) {
  cfg.validate();
  FunctionalDataset d;
  d.grid = equispaced_grid(cfg.T);
  const Eigen::VectorXd w = trapezoid_weights(d.grid);
  const Eigen::VectorXd beta = cfg.beta_true.evaluate(d.grid);
  const Eigen::VectorXd wb = w.cwiseProduct(beta);
  const int p = static_cast<int>(cfg.beta_z_true.size());
  auto zero_mean = [](double) { return 0.0; };

  d.W.resize(cfg.n);
  d.Z.resize(cfg.n, p);
  d.Y.resize(cfg.n);
  Eigen::MatrixXd x_true(cfg.n, cfg.T);
  for (int i = 0; i < cfg.n; ++i) {
    const Eigen::VectorXd x = sim_gp_exchangeable(default_x_mean, cfg.sigma_x, cfg.rho_x, d.grid, rng);
    x_true.row(i) = x.transpose();
    d.W[i].resize(cfg.J, cfg.T);
    for (int j = 0; j < cfg.J; ++j) {
      if (cfg.sigma_u > 0.0) {
        d.W[i].row(j) = (x + sim_gp_exchangeable(zero_mean, cfg.sigma_u, cfg.rho_u, d.grid, rng)).transpose();
      } else {
        d.W[i].row(j) = x.transpose();
      }
    }
    for (int k = 0; k < p; ++k) d.Z(i, k) = std_normal(rng);
    double y = wb.dot(x) + error_sample(cfg.error, rng);
    if (p > 0) y += d.Z.row(i).dot(cfg.beta_z_true);
    d.Y[i] = y;
  }
  d.X_true = std::move(x_true);
  for (int k = 0; k < p; ++k) d.covariate_names.push_back("z_" + std::to_string(k + 1));
  return d;
}

MetricsReport score_estimates(const Eigen::MatrixXd& curves, const Eigen::VectorXd& beta_true,
                              const Eigen::VectorXd& eval_grid) {
  if (curves.cols() != beta_true.size() || beta_true.size() != eval_grid.size())
    throw ValidationError("score_estimates: estimate, truth and grid lengths differ");
  if (curves.rows() < 1) throw ValidationError("score_estimates: no replicate curves");
  const double n_grid = static_cast<double>(eval_grid.size());
  const Eigen::RowVectorXd mean = curves.colwise().mean();
  MetricsReport m;
  m.abias2 = (mean - beta_true.transpose()).squaredNorm() / n_grid;
  m.avar = (curves.rowwise() - mean).squaredNorm() / (n_grid * static_cast<double>(curves.rows()));
  m.mise = m.abias2 + m.avar;
  return m;
}

std::vector<double> case_scenarios(int case_id) {
  switch (case_id) {
    case 1:
      return {200, 500, 1000};
    case 2:
      return {500};
    case 3:
      return {1, 4, 16};
    case 4:
      return {2, 3, 4};
    default:
      throw ValidationError("case id must be 1, 2, 3 or 4");
  }
}

SimConfig case_config(int case_id, double v, const SimConfig& base) {
  SimConfig c = base;
  switch (case_id) {
    case 1:
      c.n = static_cast<int>(v);
      c.error = ErrorModel{};
      break;
    case 2:
      c.n = static_cast<int>(v);
      c.error.dist = ErrorDist::SkewT;
      c.error.xi = 0.0;
      c.error.dof = 5.0;
      c.error.slant = 2.0;
      break;
    case 3:
      c.n = 500;
      c.sigma_u = v;
      break;
    case 4:
      c.n = 500;
      c.J = static_cast<int>(v);
      break;
    default:
      throw ValidationError("case id must be 1, 2, 3 or 4");
  }
  return c;
}

namespace {

struct Task {
  std::size_t scenario = 0;
  int replicate = 0;
};

}  // namespace

CaseResult run_case(int case_id, const CaseOverrides& ov, int parallelism, std::uint64_t seed) {
  const std::vector<double> all_scenarios = case_scenarios(case_id);
  std::vector<double> scenarios = all_scenarios;
  if (ov.scenario_values) scenarios = *ov.scenario_values;
  // Seeds follow the position in the full scenario list, so restricted runs reuse the same datasets.
  std::vector<std::uint64_t> scenario_index;
  for (double v : scenarios) {
    const auto it = std::find(all_scenarios.begin(), all_scenarios.end(), v);
    if (it == all_scenarios.end()) throw ValidationError("scenario value not part of case " + std::to_string(case_id));
    scenario_index.push_back(static_cast<std::uint64_t>(it - all_scenarios.begin()));
  }
  SimConfig base = ov.base;
  if (ov.T) base.T = *ov.T;
  if (ov.tau0) base.tau0 = *ov.tau0;
  if (ov.n_r) base.n_r = *ov.n_r;
  const std::vector<Estimator> estimators =
      ov.estimators ? *ov.estimators : std::vector<Estimator>{Estimator::FBQ, Estimator::Fast, Estimator::Naive};
  std::vector<SimConfig> configs;
  for (double v : scenarios) {
    configs.push_back(case_config(case_id, v, base));
    configs.back().validate();
  }
  const int n_r = base.n_r;
  const std::size_t n_est = estimators.size();
  const std::size_t n_tau = base.tau0.size();
  const Eigen::VectorXd grid = equispaced_grid(base.T);
  const int num_basis = ov.num_basis ? *ov.num_basis : default_num_basis(base.T);
  const BasisSystem basis(grid, num_basis);

  // curves[scenario][estimator * n_tau + tau] is n_r x T; NaN rows mark failures.
  std::vector<std::vector<Eigen::MatrixXd>> curves(
      scenarios.size(), std::vector<Eigen::MatrixXd>(n_est * n_tau, Eigen::MatrixXd::Constant(
                                                                        n_r, base.T, std::numeric_limits<double>::quiet_NaN())));
  std::vector<std::vector<std::string>> task_errors;
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < scenarios.size(); ++s)
    for (int r = 0; r < n_r; ++r) tasks.push_back({s, r});
  task_errors.resize(tasks.size());

  auto run_task = [&](std::size_t t) {
    const Task& task = tasks[t];
    const std::uint64_t task_seed = derive_seed(seed, static_cast<std::uint64_t>(case_id), scenario_index[task.scenario],
                                                static_cast<std::uint64_t>(task.replicate));
    FunctionalDataset data;
    try {
      Rng rng(task_seed);
      data = generate_case(configs[task.scenario], rng);
    } catch (const std::exception& e) {
      task_errors[t].push_back("scenario " + std::to_string(scenarios[task.scenario]) + " replicate " +
                               std::to_string(task.replicate) + ": data generation failed: " + e.what());
      return;
    }
    for (std::size_t e = 0; e < n_est; ++e) {
      for (std::size_t q = 0; q < n_tau; ++q) {
        McmcConfig mcmc = ov.mcmc;
        mcmc.chains = 1;
        mcmc.store_loglik = false;
        mcmc.seed = derive_seed(task_seed, 0x666974ULL, static_cast<std::uint64_t>(estimators[e]),
                                std::bit_cast<std::uint64_t>(base.tau0[q]));
        try {
          const PosteriorDraws draws = fit(data, basis, ov.priors, base.tau0[q], estimators[e], mcmc);
          curves[task.scenario][e * n_tau + q].row(task.replicate) =
              (basis.basis_matrix() * posterior_mean_phi(draws)).transpose();
        } catch (const std::exception& ex) {
          std::ostringstream msg;
          msg << "scenario " << scenarios[task.scenario] << " replicate " << task.replicate << " estimator "
              << to_string(estimators[e]) << " tau " << base.tau0[q] << ": " << ex.what();
          task_errors[t].push_back(msg.str());
        }
      }
    }
  };

  const int workers = std::max(1, std::min<int>(parallelism, static_cast<int>(tasks.size())));
  if (workers == 1) {
    for (std::size_t t = 0; t < tasks.size(); ++t) run_task(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < tasks.size(); t = next++) run_task(t);
      });
    }
    for (auto& th : pool) th.join();
  }

  CaseResult result;
  for (const auto& errs : task_errors)
    for (const auto& e : errs) result.failures.push_back(e);

  const Eigen::VectorXd truth = base.beta_true.evaluate(grid);
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    for (std::size_t e = 0; e < n_est; ++e) {
      for (std::size_t q = 0; q < n_tau; ++q) {
        const Eigen::MatrixXd& all = curves[s][e * n_tau + q];
        std::vector<Eigen::Index> ok;
        for (Eigen::Index r = 0; r < all.rows(); ++r)
          if (all.row(r).allFinite()) ok.push_back(r);
        CaseRow row;
        row.case_id = case_id;
        row.estimator = estimators[e];
        row.tau = base.tau0[q];
        row.n = configs[s].n;
        row.J = configs[s].J;
        row.sigma_u = configs[s].sigma_u;
        row.replicates = static_cast<int>(ok.size());
        if (!ok.empty()) {
          Eigen::MatrixXd used(static_cast<Eigen::Index>(ok.size()), all.cols());
          for (std::size_t r = 0; r < ok.size(); ++r) used.row(static_cast<Eigen::Index>(r)) = all.row(ok[r]);
          row.metrics = score_estimates(used, truth, grid);
        } else {
          const double nan = std::numeric_limits<double>::quiet_NaN();
          row.metrics = {nan, nan, nan};
        }
        result.rows.push_back(row);
      }
    }
  }
  return result;
}

std::string case_csv(const std::vector<CaseRow>& rows) {
  std::ostringstream out;
  out << "case,estimator,tau,n,J,sigma_u,abias2,avar,mise\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.case_id << ',' << to_string(r.estimator) << ',' << r.tau << ',' << r.n << ',' << r.J << ','
        << r.sigma_u << ',' << r.metrics.abias2 << ',' << r.metrics.avar << ',' << r.metrics.mise << '\n';
  }
  return out.str();
}

std::string case_json(int case_id, const CaseOverrides& ov, std::uint64_t seed, const CaseResult& result) {
  using nlohmann::json;
  json cfg;
  cfg["case"] = case_id;
  cfg["seed"] = seed;
  const SimConfig& b = ov.base;
  cfg["base"] = {{"T", ov.T.value_or(b.T)},
                 {"sigma_x", b.sigma_x},
                 {"rho_x", b.rho_x},
                 {"sigma_u", b.sigma_u},
                 {"rho_u", b.rho_u},
                 {"J", b.J},
                 {"n", b.n},
                 {"sigma_e", b.error.sigma_e},
                 {"beta_form", b.beta_true.form},
                 {"beta_coefs", b.beta_true.coefs},
                 {"beta_z", std::vector<double>(b.beta_z_true.data(), b.beta_z_true.data() + b.beta_z_true.size())},
                 {"tau0", ov.tau0.value_or(b.tau0)},
                 {"n_r", ov.n_r.value_or(b.n_r)}};
  if (ov.scenario_values) cfg["scenario_values"] = *ov.scenario_values;
  if (ov.num_basis) cfg["num_basis"] = *ov.num_basis;
  if (ov.estimators) {
    std::vector<std::string> names;
    for (auto e : *ov.estimators) names.push_back(to_string(e));
    cfg["estimators"] = names;
  }
  cfg["mcmc"] = {{"iters", ov.mcmc.iters}, {"burnin", ov.mcmc.burnin}, {"thin", ov.mcmc.thin}};
  json rows = json::array();
  for (const auto& r : result.rows) {
    rows.push_back({{"case", r.case_id},
                    {"estimator", to_string(r.estimator)},
                    {"tau", r.tau},
                    {"n", r.n},
                    {"J", r.J},
                    {"sigma_u", r.sigma_u},
                    {"replicates", r.replicates},
                    {"abias2", r.metrics.abias2},
                    {"avar", r.metrics.avar},
                    {"mise", r.metrics.mise}});
  }
  json out;
  out["config"] = cfg;
  out["rows"] = rows;
  out["failures"] = result.failures;
  out["complete"] = result.complete();
  return out.dump(2);
}

}  // namespace sofqr
