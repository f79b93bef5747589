#pragma once

// Simulation designs for measurement-error functional quantile regression
// and the bias/variance scoring used to compare estimators.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sofqr/data.hpp"
#include "sofqr/random.hpp"
#include "sofqr/sampler.hpp"

namespace sofqr {

enum class ErrorDist { Normal, SkewT };

struct ErrorModel {
  ErrorDist dist = ErrorDist::Normal;
  double sigma_e = 1.0;
  // Azzalini skew-t location, degrees of freedom and slant.
  double xi = 0.0;
  double dof = 5.0;
  double slant = 2.0;
};

/// beta(t) as a named form: "sine" c0 sin(2 pi t), "cosine" c0 cos(2 pi t),
/// "polynomial" sum_k c_k t^k, or "zero".
struct BetaSpec {
  std::string form = "sine";
  std::vector<double> coefs{2.0};

  double operator()(double t) const;
  Eigen::VectorXd evaluate(const Eigen::VectorXd& grid) const;
};

struct SimConfig {
  int n = 500;
  int J = 5;
  int T = 100;
  double sigma_x = 4.0;
  double rho_x = 0.5;
  double sigma_u = 4.0;  // 0 gives error-free replicates
  double rho_u = 0.5;
  ErrorModel error;
  BetaSpec beta_true;
  Eigen::VectorXd beta_z_true = (Eigen::VectorXd(2) << 1.0, -0.5).finished();
  std::vector<double> tau0{0.25, 0.5, 0.9};
  int n_r = 100;
  std::uint64_t seed = 20240611;

  void validate() const;
};

/// X mean used by the designs: (sin(2 pi t) + 1.25) / 2.
double default_x_mean(double t);

/// mean(t) + sigma (sqrt(rho) z0 + sqrt(1 - rho) z_t): compound-symmetric
/// Gaussian process with variance sigma^2 and covariance rho sigma^2.
Eigen::VectorXd sim_gp_exchangeable(const std::function<double(double)>& meanfn, double sigma, double rho,
                                    const Eigen::VectorXd& grid, Rng& rng);

double skew_t_sample(double xi, double dof, double slant, Rng& rng);
double skew_t_pdf(double x, double xi, double dof, double slant);
/// Distribution function by adaptive quadrature of the density.
double skew_t_cdf(double x, double xi, double dof, double slant);
double skew_t_quantile(double p, double xi, double dof, double slant);

double error_sample(const ErrorModel& model, Rng& rng);
/// tau-quantile of the error law; the true quantile-regression intercept.
double error_quantile(const ErrorModel& model, double tau);

Eigen::VectorXd equispaced_grid(int T);

/// X_i, W_ij = X_i + U_ij, Z_i ~ N(0, I), Y_i = Z_i' beta_z + int beta X_i + eps_i.
FunctionalDataset generate_case(const SimConfig& config, Rng& rng);

struct MetricsReport {
  double abias2 = 0.0;
  double avar = 0.0;
  double mise = 0.0;
};

/// curves: n_r x n_grid replicate estimates on eval_grid.
MetricsReport score_estimates(const Eigen::MatrixXd& curves, const Eigen::VectorXd& beta_true,
                              const Eigen::VectorXd& eval_grid);

struct CaseRow {
  int case_id = 0;
  Estimator estimator = Estimator::Fast;
  double tau = 0.5;
  int n = 0;
  int J = 0;
  double sigma_u = 0.0;
  int replicates = 0;  // successful fits scored
  MetricsReport metrics;
};

struct CaseOverrides {
  std::optional<int> n_r;
  std::optional<std::vector<double>> tau0;
  std::optional<std::vector<Estimator>> estimators;
  /// Restricts the scenario axis of the case (n, sigma_u or J values).
  std::optional<std::vector<double>> scenario_values;
  std::optional<int> num_basis;
  std::optional<int> T;
  McmcConfig mcmc;
  PriorConfig priors;
  SimConfig base;
};

struct CaseResult {
  std::vector<CaseRow> rows;
  std::vector<std::string> failures;
  bool complete() const { return failures.empty(); }
};

/// Scenario axis values: 1 -> n, 2 -> n (single), 3 -> sigma_u, 4 -> J.
std::vector<double> case_scenarios(int case_id);
SimConfig case_config(int case_id, double scenario_value, const SimConfig& base);

/// Runs every (scenario, replicate) as an independent task on `parallelism`
/// workers; rows are ordered by scenario, estimator, tau regardless of
/// scheduling. Failed fits are reported and excluded from the metrics.
CaseResult run_case(int case_id, const CaseOverrides& overrides, int parallelism, std::uint64_t seed);

std::string case_csv(const std::vector<CaseRow>& rows);
std::string case_json(int case_id, const CaseOverrides& overrides, std::uint64_t seed, const CaseResult& result);

}  // namespace sofqr
