#include "sofqr/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "sofqr/numerics.hpp"

namespace sofqr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

const Eigen::MatrixXd& current_scores(const ModelState& st, const SamplerData& data, GibbsMode mode) {
  return mode == GibbsMode::Full ? st.X : data.x_fixed;
}

Eigen::VectorXd fitted_values(const ModelState& st, const SamplerData& data, const Eigen::MatrixXd& x) {
  Eigen::VectorXd f = Eigen::VectorXd::Constant(data.n(), st.beta0);
  if (data.p() > 0) f.noalias() += data.z * st.beta_z;
  if (data.n() > 0) f.noalias() += x * st.phi;
  return f;
}

std::vector<GalParams> gal_components(const ModelState& st, const ResolvedPriors& pr) {
  std::vector<GalParams> out;
  out.reserve(st.gamma.size());
  for (std::size_t k = 0; k < st.gamma.size(); ++k)
    out.emplace_back(pr.tau0, st.gamma[k], st.sigma[k], pr.bounds);
  return out;
}

double component_log_target(const std::vector<double>& resid, double gamma, double sigma,
                            const ResolvedPriors& pr) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) return kNegInf;
  if (!(gamma > pr.bounds.lower && gamma < pr.bounds.upper)) return kNegInf;
  const GalParams g(pr.tau0, gamma, sigma, pr.bounds);
  double acc = (pr.sigma_shape - 1.0) * std::log(sigma) - pr.sigma_rate * sigma;
  for (double r : resid) acc += gal_logpdf(r, g);
  return acc;
}

double draw_gamma_from_prior(const ResolvedPriors& pr, Rng& rng) {
  if (pr.fixed_gamma) return *pr.fixed_gamma;
  for (;;) {
    const double g = pr.bounds.lower + (pr.bounds.upper - pr.bounds.lower) * std_uniform(rng);
    if (g > pr.bounds.lower && g < pr.bounds.upper) return g;
  }
}

// (gamma_k, sigma_k) | members, beta with (s, nu) integrated out.
void update_gal_components(ModelState& st, const Eigen::VectorXd& resid, const ResolvedPriors& pr,
                           const StepOptions& opt, Rng& rng) {
  const int k_count = pr.K_eps;
  std::vector<std::vector<double>> members(k_count);
  for (Eigen::Index i = 0; i < resid.size(); ++i) members[st.eps_label[i]].push_back(resid[i]);

  const double lo = pr.bounds.lower;
  const double width = pr.bounds.upper - pr.bounds.lower;
  for (int k = 0; k < k_count; ++k) {
    if (members[k].empty()) {
      st.gamma[k] = draw_gamma_from_prior(pr, rng);
      st.sigma[k] = gamma_sample(pr.sigma_shape, pr.sigma_rate, rng);
      continue;
    }
    const double step = std::exp(st.mh_log_step[k]);
    const double gamma = st.gamma[k];
    const double sigma = st.sigma[k];
    double gamma_new = gamma;
    const double sigma_new = sigma * std::exp(step * std_normal(rng));
    double log_jac_old = std::log(sigma);
    double log_jac_new = std::log(sigma_new);
    if (!pr.fixed_gamma) {
      const double u = (gamma - lo) / width;
      const double eta = std::log(u) - std::log1p(-u);
      const double u_new = logistic(eta + step * std_normal(rng));
      gamma_new = lo + width * u_new;
      log_jac_old += std::log(u) + std::log1p(-u);
      log_jac_new += std::log(u_new) + std::log1p(-u_new);
    }
    const double old_target = component_log_target(members[k], gamma, sigma, pr) + log_jac_old;
    const double new_target = component_log_target(members[k], gamma_new, sigma_new, pr) + log_jac_new;
    const double log_ratio = new_target - old_target;
    const bool accept = std::isfinite(new_target) && std::log(std_uniform(rng)) < log_ratio;
    if (accept) {
      st.gamma[k] = gamma_new;
      st.sigma[k] = sigma_new;
    }
    if (opt.adapt) {
      const double acc_prob = std::isfinite(log_ratio) ? std::min(1.0, std::exp(log_ratio)) : 0.0;
      const double gain = std::pow(static_cast<double>(st.iteration) + 1.0, -0.6);
      st.mh_log_step[k] = std::clamp(st.mh_log_step[k] + gain * (acc_prob - opt.target_accept), -12.0, 3.0);
    } else {
      ++st.mh_proposed[k];
      if (accept) ++st.mh_accepted[k];
    }
  }
}

// Labels marginally over (s, nu), then (s, nu) | label exactly: s from the
// two-piece truncated-normal law of the GAL integrand, nu | s from a GIG.
void update_gal_latents(ModelState& st, const Eigen::VectorXd& resid, const std::vector<GalParams>& comps,
                        Rng& rng) {
  const int k_count = static_cast<int>(comps.size());
  std::vector<double> log_w(k_count);
  for (int k = 0; k < k_count; ++k) log_w[k] = std::log(st.eps_weights[k]);
  std::vector<GalPieces> pieces(k_count);
  std::vector<double> lp(k_count);
  for (Eigen::Index i = 0; i < resid.size(); ++i) {
    const double r = resid[i];
    int c = 0;
    if (k_count == 1) {
      pieces[0] = gal_log_pieces(r, comps[0]);
    } else {
      for (int k = 0; k < k_count; ++k) {
        pieces[k] = gal_log_pieces(r, comps[k]);
        lp[k] = log_w[k] + log_add_exp(pieces[k].log_lower, pieces[k].log_upper) -
                std::log(comps[k].sigma());
      }
      c = categorical_log_sample(lp, rng);
    }
    st.eps_label[i] = c;
    const GalParams& g = comps[c];
    const GalPieces& pc = pieces[c];
    const double total = log_add_exp(pc.log_lower, pc.log_upper);
    double s_std = 0.0;
    if (pc.log_lower > kNegInf && std::log(std_uniform(rng)) < pc.log_lower - total) {
      s_std = trunc_normal_sample(pc.mean_lower, 1.0, 0.0, pc.split, rng);
    } else {
      s_std = trunc_normal_sample(pc.mean_upper, 1.0, pc.split, rng);
    }
    const double sigma = g.sigma();
    const double rr = r / sigma - g.alpha() * s_std;
    const double chi = std::max(rr * rr / g.B(), 1e-300);
    const double psi = g.A() * g.A() / g.B() + 2.0;
    st.s[i] = sigma * s_std;
    st.nu[i] = sigma * gig_sample(0.5, chi, psi, rng);
  }
}

// Conditionally Gaussian working response and precision weight of obs i.
struct Working {
  Eigen::VectorXd shifted;  // y - alpha s - A nu
  Eigen::VectorXd weight;   // 1 / (sigma B nu)
};

Working working_response(const ModelState& st, const SamplerData& data, const std::vector<GalParams>& comps) {
  const int n = data.n();
  Working w{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    const GalParams& g = comps[st.eps_label[i]];
    w.shifted[i] = data.y[i] - g.alpha() * st.s[i] - g.A() * st.nu[i];
    w.weight[i] = 1.0 / (g.sigma() * g.B() * st.nu[i]);
  }
  return w;
}

void update_coefficients(ModelState& st, const SamplerData& data, const Eigen::MatrixXd& x,
                         const ResolvedPriors& pr, const Working& work, Rng& rng) {
  const int n = data.n();
  const int p = data.p();
  const int k = data.K();
  const int dim = 1 + p + k;
  Eigen::MatrixXd design(n, dim);
  if (n > 0) {
    design.col(0).setOnes();
    if (p > 0) design.middleCols(1, p) = data.z;
    design.rightCols(k) = x;
  }
  const Eigen::MatrixXd weighted = work.weight.asDiagonal() * design;
  Eigen::MatrixXd q = design.transpose() * weighted;
  Eigen::VectorXd h = weighted.transpose() * work.shifted;
  q.topLeftCorner(1 + p, 1 + p) += pr.coef_precision;
  q.bottomRightCorner(k, k) += pr.phi_penalty / st.theta2;

  Eigen::VectorXd draw;
  double jitter = 1e-8;
  while (!mvn_canonical_sample(q, h, rng, draw)) {
    if (jitter > 1e-4) {
      std::ostringstream msg;
      msg << "coefficient full conditional not positive definite at iteration " << st.iteration;
      throw DivergenceError(msg.str(), st.iteration);
    }
    q.bottomRightCorner(k, k).diagonal().array() += jitter;
    jitter *= 10.0;
  }
  st.beta0 = draw[0];
  st.beta_z = draw.segment(1, p);
  st.phi = draw.tail(k);
}

// Neal's stepping-out slice sampler for a univariate log density.
template <class LogDensity>
double slice_sample(double x0, LogDensity&& logf, double width, Rng& rng) {
  const double level = logf(x0) - std_exponential(rng);
  double left = x0 - width * std_uniform(rng);
  double right = left + width;
  for (int i = 0; i < 60 && logf(left) > level; ++i) left -= width;
  for (int i = 0; i < 60 && logf(right) > level; ++i) right += width;
  for (int i = 0; i < 200; ++i) {
    const double x = left + (right - left) * std_uniform(rng);
    if (logf(x) > level) return x;
    if (x < x0) {
      left = x;
    } else {
      right = x;
    }
  }
  return x0;
}

void update_theta2(ModelState& st, const ResolvedPriors& pr, Rng& rng) {
  const double quad = st.phi.dot(pr.phi_penalty * st.phi);
  const double rank = pr.penalty_rank;
  if (pr.theta_prior == ThetaPrior::InverseGamma) {
    const double shape = pr.theta_ig_shape + 0.5 * rank;
    const double rate = pr.theta_ig_rate + 0.5 * quad;
    st.theta2 = 1.0 / gamma_sample(shape, rate, rng);
    return;
  }
  // theta ~ Exp(rate): on l = log theta2 the target is
  // -(rank/2) l - quad e^{-l} / 2 + l / 2 - rate e^{l/2}; log-concave.
  const double lambda = pr.theta_rate;
  auto logf = [&](double l) {
    return -0.5 * rank * l - 0.5 * quad * std::exp(-l) + 0.5 * l - lambda * std::exp(0.5 * l);
  };
  st.theta2 = std::exp(slice_sample(std::log(st.theta2), logf, 2.0, rng));
}

void update_eps_weights(ModelState& st, const ResolvedPriors& pr, Rng& rng) {
  Eigen::VectorXd conc = Eigen::VectorXd::Constant(pr.K_eps, pr.alpha_eps / pr.K_eps);
  for (int c : st.eps_label) conc[c] += 1.0;
  st.eps_weights = dirichlet_sample(conc, rng);
}

struct GaussianComponent {
  Eigen::MatrixXd precision;
  Eigen::VectorXd precision_mean;
  Eigen::MatrixXd chol_l;  // of the covariance
  double log_det = 0.0;
};

std::vector<GaussianComponent> prepare_components(const std::vector<Eigen::VectorXd>& mu,
                                                  const std::vector<Eigen::MatrixXd>& cov) {
  std::vector<GaussianComponent> out(mu.size());
  for (std::size_t k = 0; k < mu.size(); ++k) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov[k]);
    if (llt.info() != Eigen::Success) throw DivergenceError("mixture covariance lost positive definiteness", -1);
    const Eigen::Index d = cov[k].rows();
    out[k].precision = symmetrize(llt.solve(Eigen::MatrixXd::Identity(d, d)));
    out[k].precision_mean = out[k].precision * mu[k];
    out[k].chol_l = llt.matrixL();
    out[k].log_det = 2.0 * out[k].chol_l.diagonal().array().log().sum();
  }
  return out;
}

void update_latent_scores(ModelState& st, const SamplerData& data, const std::vector<GalParams>& comps,
                          Rng& rng) {
  const int n = data.n();
  const int k = data.K();
  const int reps = static_cast<int>(data.w_scores.front().rows());
  const auto u_comp = prepare_components(st.u_mu, st.u_cov);
  const auto x_comp = prepare_components(st.x_mu, st.x_cov);
  const int ku = static_cast<int>(u_comp.size());

  Eigen::MatrixXd q(k, k);
  Eigen::VectorXd h(k);
  Eigen::VectorXd draw;
  std::vector<int> counts(ku);
  for (int i = 0; i < n; ++i) {
    const int gx = st.x_label[i];
    q = x_comp[gx].precision;
    h = x_comp[gx].precision_mean;
    std::fill(counts.begin(), counts.end(), 0);
    for (int j = 0; j < reps; ++j) {
      const int d = st.u_label[static_cast<std::size_t>(i) * reps + j];
      ++counts[d];
      h.noalias() += u_comp[d].precision * data.w_scores[i].row(j).transpose() - u_comp[d].precision_mean;
    }
    for (int d = 0; d < ku; ++d) {
      if (counts[d] > 0) q += counts[d] * u_comp[d].precision;
    }
    const GalParams& g = comps[st.eps_label[i]];
    const double weight = 1.0 / (g.sigma() * g.B() * st.nu[i]);
    double target = data.y[i] - st.beta0 - g.alpha() * st.s[i] - g.A() * st.nu[i];
    if (data.p() > 0) target -= data.z.row(i).dot(st.beta_z);
    q.noalias() += weight * st.phi * st.phi.transpose();
    h.noalias() += weight * target * st.phi;
    if (!mvn_canonical_sample(q, h, rng, draw)) {
      std::ostringstream msg;
      msg << "latent score precision not positive definite for subject " << i << " at iteration "
          << st.iteration;
      throw DivergenceError(msg.str(), st.iteration);
    }
    st.X.row(i) = draw.transpose();
  }
}

// Labels, then per-component conjugate (Sigma | mu), (mu | Sigma), then weights.
void update_gaussian_mixture(const Eigen::MatrixXd& obs, std::vector<int>& label, Eigen::VectorXd& weights,
                             std::vector<Eigen::VectorXd>& mu, std::vector<Eigen::MatrixXd>& cov, double alpha,
                             const Eigen::VectorXd& mu0, const Eigen::MatrixXd& sigma0, double nu0,
                             const Eigen::MatrixXd& psi0, Rng& rng) {
  const int m = static_cast<int>(obs.rows());
  const int d = static_cast<int>(obs.cols());
  const int kc = static_cast<int>(mu.size());

  if (kc > 1) {
    const auto comp = prepare_components(mu, cov);
    Eigen::MatrixXd logp(m, kc);
    for (int c = 0; c < kc; ++c) {
      Eigen::MatrixXd centered = (obs.rowwise() - mu[c].transpose()).transpose();  // d x m
      comp[c].chol_l.triangularView<Eigen::Lower>().solveInPlace(centered);
      logp.col(c) = (-0.5 * centered.colwise().squaredNorm().array()).transpose().matrix();
      logp.col(c).array() += std::log(weights[c]) - 0.5 * comp[c].log_det;
    }
    std::vector<double> row(kc);
    for (int i = 0; i < m; ++i) {
      for (int c = 0; c < kc; ++c) row[c] = logp(i, c);
      label[i] = categorical_log_sample(row, rng);
    }
  } else {
    std::fill(label.begin(), label.end(), 0);
  }

  Eigen::LLT<Eigen::MatrixXd> prior_llt(sigma0);
  const Eigen::MatrixXd prior_prec = prior_llt.solve(Eigen::MatrixXd::Identity(d, d));
  const Eigen::VectorXd prior_lin = prior_prec * mu0;
  std::vector<int> counts(kc, 0);
  std::vector<Eigen::VectorXd> sums(kc, Eigen::VectorXd::Zero(d));
  for (int i = 0; i < m; ++i) {
    ++counts[label[i]];
    sums[label[i]] += obs.row(i).transpose();
  }
  std::vector<Eigen::MatrixXd> scatter(kc, Eigen::MatrixXd::Zero(d, d));
  for (int i = 0; i < m; ++i) {
    const Eigen::VectorXd dev = obs.row(i).transpose() - mu[label[i]];
    scatter[label[i]].noalias() += dev * dev.transpose();
  }
  for (int c = 0; c < kc; ++c) {
    cov[c] = inv_wishart_sample(nu0 + counts[c], symmetrize(psi0 + scatter[c]), rng);
    Eigen::LLT<Eigen::MatrixXd> llt(cov[c]);
    const Eigen::MatrixXd prec = llt.solve(Eigen::MatrixXd::Identity(d, d));
    const Eigen::MatrixXd post_prec = symmetrize(prior_prec + counts[c] * prec);
    Eigen::VectorXd draw;
    if (!mvn_canonical_sample(post_prec, prior_lin + prec * sums[c], rng, draw))
      throw DivergenceError("mixture mean precision not positive definite", -1);
    mu[c] = draw;
  }
  Eigen::VectorXd conc = Eigen::VectorXd::Constant(kc, alpha / kc);
  for (int c = 0; c < kc; ++c) conc[c] += counts[c];
  weights = dirichlet_sample(conc, rng);
}

void update_measurement_error(ModelState& st, const SamplerData& data, const ResolvedPriors& pr, Rng& rng) {
  const int n = data.n();
  const int reps = static_cast<int>(data.w_scores.front().rows());
  Eigen::MatrixXd u(static_cast<Eigen::Index>(n) * reps, data.K());
  for (int i = 0; i < n; ++i) {
    u.middleRows(static_cast<Eigen::Index>(i) * reps, reps) = data.w_scores[i].rowwise() - st.X.row(i);
  }
  update_gaussian_mixture(u, st.u_label, st.u_weights, st.u_mu, st.u_cov, pr.alpha_u, pr.mu_u0, pr.sigma_u0,
                          pr.nu_u0, pr.psi_u0, rng);
  // Project onto sum_k pi_k mu_k = 0.
  Eigen::VectorXd centre = Eigen::VectorXd::Zero(data.K());
  for (std::size_t c = 0; c < st.u_mu.size(); ++c) centre += st.u_weights[c] * st.u_mu[c];
  for (auto& m : st.u_mu) m -= centre;
}

void update_x_mixture(ModelState& st, const ResolvedPriors& pr, Rng& rng) {
  update_gaussian_mixture(st.X, st.x_label, st.x_weights, st.x_mu, st.x_cov, pr.alpha_x, pr.mu_x0, pr.sigma_x0,
                          pr.nu_x0, pr.psi_x0, rng);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

// Ridge-stabilized least squares of y on [1, z, x].
Eigen::VectorXd least_squares_start(const SamplerData& data, const Eigen::MatrixXd& x) {
  const int n = data.n();
  const int p = data.p();
  const int k = static_cast<int>(x.cols());
  const int dim = 1 + p + k;
  if (n == 0) return Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd design(n, dim);
  design.col(0).setOnes();
  if (p > 0) design.middleCols(1, p) = data.z;
  design.rightCols(k) = x;
  Eigen::MatrixXd gram = design.transpose() * design;
  const double ridge = 1e-6 * gram.diagonal().mean() + 1e-12;
  gram.diagonal().array() += ridge;
  return gram.ldlt().solve(design.transpose() * data.y);
}

void check_finite(const ModelState& st, long iteration) {
  bool ok = std::isfinite(st.beta0) && st.beta_z.allFinite() && st.phi.allFinite() && std::isfinite(st.theta2) &&
            st.theta2 > 0.0;
  for (double s : st.sigma) ok = ok && std::isfinite(s) && s > 0.0;
  if (!ok) {
    std::ostringstream msg;
    msg << "non-finite sampler state at iteration " << iteration << "; last valid iteration " << iteration - 1;
    throw DivergenceError(msg.str(), iteration);
  }
}

}  // namespace

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::FBQ:
      return "FBQ";
    case Estimator::Fast:
      return "fast";
    case Estimator::Naive:
      return "naive";
  }
  return "unknown";
}

Estimator estimator_from_string(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "fbq" || lower == "full") return Estimator::FBQ;
  if (lower == "fast" || lower == "rc") return Estimator::Fast;
  if (lower == "naive") return Estimator::Naive;
  throw ValidationError("unknown estimator '" + name + "' (expected FBQ, fast or naive)");
}

GalMixture ModelState::gal_mixture(double tau0, const GammaBounds& bounds) const {
  std::vector<double> w(eps_weights.data(), eps_weights.data() + eps_weights.size());
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= total;
  std::vector<GalParams> comps;
  for (std::size_t k = 0; k < gamma.size(); ++k) comps.emplace_back(tau0, gamma[k], sigma[k], bounds);
  return GalMixture(std::move(w), std::move(comps));
}

ResolvedPriors resolve_priors(const PriorConfig& cfg, const SamplerData& data, const Eigen::MatrixXd& init_scores,
                              const std::optional<MomentEstimates>& moments) {
  const int p = data.p();
  const int k = data.K();
  if (cfg.K_eps < 1 || cfg.K_u < 1 || cfg.K_x < 1) throw ValidationError("priors: mixture sizes must be >= 1");
  if (!(cfg.alpha_eps > 0.0 && cfg.alpha_u > 0.0 && cfg.alpha_x > 0.0))
    throw ValidationError("priors: concentrations must be > 0");
  if (!(cfg.sigma_shape > 0.0 && cfg.sigma_rate > 0.0)) throw ValidationError("priors: sigma prior must be proper");
  if (cfg.penalty_ridge < 0.0) throw ValidationError("priors: penalty_ridge must be >= 0");

  ResolvedPriors pr;
  pr.tau0 = data.tau0;
  pr.bounds = gamma_bounds(data.tau0);
  const Eigen::MatrixXd sz0 =
      cfg.sigma_z0 ? *cfg.sigma_z0 : Eigen::MatrixXd(cfg.coef_prior_var * Eigen::MatrixXd::Identity(1 + p, 1 + p));
  if (sz0.rows() != 1 + p || sz0.cols() != 1 + p) throw ValidationError("priors: sigma_z0 must be (1 + p) square");
  Eigen::LLT<Eigen::MatrixXd> sz_llt(sz0);
  if (sz_llt.info() != Eigen::Success) throw ValidationError("priors: sigma_z0 must be positive definite");
  pr.coef_precision = symmetrize(sz_llt.solve(Eigen::MatrixXd::Identity(1 + p, 1 + p)));

  pr.phi_penalty = data.penalty + cfg.penalty_ridge * Eigen::MatrixXd::Identity(k, k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(pr.phi_penalty, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().maxCoeff();
  pr.penalty_rank = static_cast<int>((eig.eigenvalues().array() > 1e-10 * top).count());

  pr.theta_prior = cfg.theta_prior;
  pr.theta_ig_shape = cfg.theta_ig_shape;
  pr.theta_ig_rate = cfg.theta_ig_rate;
  if (cfg.theta_rate > 0.0) {
    pr.theta_rate = cfg.theta_rate;
  } else {
    double scale = 1.0;
    if (data.n() > 1 + p + k) {
      const Eigen::VectorXd b = least_squares_start(data, init_scores);
      Eigen::VectorXd resid = data.y - Eigen::VectorXd::Constant(data.n(), b[0]);
      if (p > 0) resid -= data.z * b.segment(1, p);
      resid -= init_scores * b.tail(k);
      scale = std::sqrt(resid.squaredNorm() / (data.n() - 1 - p - k));
      if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
    }
    pr.theta_rate = std::log(2.0) / scale;
  }

  pr.K_eps = cfg.K_eps;
  pr.alpha_eps = cfg.alpha_eps;
  pr.sigma_shape = cfg.sigma_shape;
  pr.sigma_rate = cfg.sigma_rate;
  pr.fixed_gamma = cfg.fixed_gamma;
  if (pr.fixed_gamma && !(*pr.fixed_gamma > pr.bounds.lower && *pr.fixed_gamma < pr.bounds.upper))
    throw ValidationError("priors: fixed gamma outside its admissible interval");

  // Score-space defaults: centre the inverse-Wishart priors on the moment estimates.
  Eigen::MatrixXd su = Eigen::MatrixXd::Identity(k, k);
  Eigen::MatrixXd sx = Eigen::MatrixXd::Identity(k, k);
  Eigen::VectorXd mx = Eigen::VectorXd::Zero(k);
  if (moments) {
    const double ridge_u = 1e-6 * moments->sigma_u.trace() / k + 1e-12;
    const double ridge_x = 1e-6 * moments->s_between.trace() / k + 1e-12;
    su = moments->sigma_u + ridge_u * Eigen::MatrixXd::Identity(k, k);
    sx = moments->s_between + ridge_x * Eigen::MatrixXd::Identity(k, k);
    mx = moments->mu_x;
  }
  pr.K_u = cfg.K_u;
  pr.alpha_u = cfg.alpha_u;
  pr.nu_u0 = cfg.nu_u0 > 0.0 ? cfg.nu_u0 : k + 3.0;
  if (!(pr.nu_u0 > k - 1)) throw ValidationError("priors: nu_u0 must exceed K - 1");
  pr.mu_u0 = cfg.mu_u0 ? *cfg.mu_u0 : Eigen::VectorXd::Zero(k);
  pr.sigma_u0 = cfg.sigma_u0 ? *cfg.sigma_u0 : su;
  pr.psi_u0 = cfg.psi_u0 ? *cfg.psi_u0 : Eigen::MatrixXd(std::max(pr.nu_u0 - k - 1.0, 1.0) * su);

  pr.K_x = cfg.K_x;
  pr.alpha_x = cfg.alpha_x;
  pr.nu_x0 = cfg.nu_x0 > 0.0 ? cfg.nu_x0 : k + 3.0;
  if (!(pr.nu_x0 > k - 1)) throw ValidationError("priors: nu_x0 must exceed K - 1");
  pr.mu_x0 = cfg.mu_x0 ? *cfg.mu_x0 : mx;
  pr.sigma_x0 = cfg.sigma_x0 ? *cfg.sigma_x0 : sx;
  pr.psi_x0 = cfg.psi_x0 ? *cfg.psi_x0 : Eigen::MatrixXd(std::max(pr.nu_x0 - k - 1.0, 1.0) * sx);
  return pr;
}

ModelState initial_state(const SamplerData& data, const ResolvedPriors& pr, GibbsMode mode,
                         const Eigen::MatrixXd& init_scores, Rng& rng) {
  const int n = data.n();
  const int p = data.p();
  const int k = data.K();
  ModelState st;
  const Eigen::VectorXd b = least_squares_start(data, init_scores);
  st.beta0 = b[0];
  st.beta_z = b.segment(1, p);
  st.phi = b.tail(k);
  st.theta2 = 1.0;

  std::vector<double> resid(n);
  for (int i = 0; i < n; ++i) {
    double f = st.beta0 + init_scores.row(i).dot(st.phi);
    if (p > 0) f += data.z.row(i).dot(st.beta_z);
    resid[i] = data.y[i] - f;
  }
  const double centre = median(resid);
  std::vector<double> dev(n);
  for (int i = 0; i < n; ++i) dev[i] = std::abs(resid[i] - centre);
  double mad = median(dev);
  if (!(mad > 0.0) || !std::isfinite(mad)) mad = 1.0;

  st.gamma.assign(pr.K_eps, pr.fixed_gamma.value_or(0.0));
  st.sigma.assign(pr.K_eps, mad);
  st.eps_weights = Eigen::VectorXd::Constant(pr.K_eps, 1.0 / pr.K_eps);
  st.eps_label.resize(n);
  for (int i = 0; i < n; ++i) st.eps_label[i] = static_cast<int>(rng() % static_cast<std::uint64_t>(pr.K_eps));
  st.s = Eigen::VectorXd::Zero(n);
  st.nu = Eigen::VectorXd::Constant(n, mad);
  st.mh_log_step.assign(pr.K_eps, std::log(0.3));
  st.mh_accepted.assign(pr.K_eps, 0);
  st.mh_proposed.assign(pr.K_eps, 0);

  if (mode == GibbsMode::Full) {
    if (data.w_scores.size() != static_cast<std::size_t>(n)) throw ValidationError("full mode needs replicate scores");
    const int reps = static_cast<int>(data.w_scores.front().rows());
    st.X = init_scores;
    st.x_label.resize(n);
    for (int i = 0; i < n; ++i) st.x_label[i] = static_cast<int>(rng() % static_cast<std::uint64_t>(pr.K_x));
    st.x_weights = Eigen::VectorXd::Constant(pr.K_x, 1.0 / pr.K_x);
    st.x_mu.assign(pr.K_x, init_scores.colwise().mean().transpose());
    st.x_cov.assign(pr.K_x, pr.psi_x0 / std::max(pr.nu_x0 - k - 1.0, 1.0));
    st.u_label.resize(static_cast<std::size_t>(n) * reps);
    for (auto& l : st.u_label) l = static_cast<int>(rng() % static_cast<std::uint64_t>(pr.K_u));
    st.u_weights = Eigen::VectorXd::Constant(pr.K_u, 1.0 / pr.K_u);
    st.u_mu.assign(pr.K_u, Eigen::VectorXd::Zero(k));
    st.u_cov.assign(pr.K_u, pr.psi_u0 / std::max(pr.nu_u0 - k - 1.0, 1.0));
  }
  return st;
}

void gibbs_step(ModelState& st, const SamplerData& data, const ResolvedPriors& pr, GibbsMode mode,
                const StepOptions& opt, Rng& rng) {
  if (mode == GibbsMode::Full && data.n() == 0) throw ValidationError("full mode needs data");
  const Eigen::MatrixXd& x = current_scores(st, data, mode);
  Eigen::VectorXd resid = data.y - fitted_values(st, data, x);

  update_gal_components(st, resid, pr, opt, rng);
  std::vector<GalParams> comps = gal_components(st, pr);
  update_gal_latents(st, resid, comps, rng);

  Working work = working_response(st, data, comps);
  update_coefficients(st, data, x, pr, work, rng);
  update_theta2(st, pr, rng);
  update_eps_weights(st, pr, rng);

  if (mode == GibbsMode::Full) {
    update_latent_scores(st, data, comps, rng);
    update_measurement_error(st, data, pr, rng);
    update_x_mixture(st, pr, rng);
  }
  ++st.iteration;
}

void simulate_response(const ModelState& st, SamplerData& data, GibbsMode mode, Rng& rng) {
  const Eigen::MatrixXd& x = current_scores(st, data, mode);
  const Eigen::VectorXd f = fitted_values(st, data, x);
  const GammaBounds bounds = gamma_bounds(data.tau0);
  for (int i = 0; i < data.n(); ++i) {
    const int c = st.eps_label[i];
    const GalParams g(data.tau0, st.gamma[c], st.sigma[c], bounds);
    data.y[i] = f[i] + g.alpha() * st.s[i] + g.A() * st.nu[i] +
                std::sqrt(g.sigma() * g.B() * st.nu[i]) * std_normal(rng);
  }
}

Eigen::VectorXd pointwise_loglik(const ModelState& st, const SamplerData& data, const ResolvedPriors& pr,
                                 GibbsMode mode) {
  const Eigen::MatrixXd& x = current_scores(st, data, mode);
  const Eigen::VectorXd resid = data.y - fitted_values(st, data, x);
  const GalMixture mix = st.gal_mixture(pr.tau0, pr.bounds);
  Eigen::VectorXd out(data.n());
  for (int i = 0; i < data.n(); ++i) out[i] = galmix_logpdf(resid[i], mix);
  return out;
}

double mvn_mixture_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& weights,
                          const std::vector<Eigen::VectorXd>& means, const std::vector<Eigen::MatrixXd>& covs) {
  std::vector<double> terms;
  for (std::size_t k = 0; k < means.size(); ++k) {
    Eigen::LLT<Eigen::MatrixXd> llt(covs[k]);
    if (llt.info() != Eigen::Success) throw ValidationError("mvn_mixture_logpdf: covariance not PD");
    const Eigen::VectorXd z = llt.matrixL().solve(x - means[k]);
    const double log_det = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    terms.push_back(std::log(weights[k]) - 0.5 * (z.squaredNorm() + log_det + x.size() * kLog2Pi));
  }
  return log_sum_exp(terms);
}

namespace {

struct ChainOutput {
  std::vector<double> beta0, theta2;
  std::vector<Eigen::VectorXd> beta_z, phi, w, g, s, loglik;
  std::vector<long> accepted, proposed;
};

ChainOutput run_chain(const SamplerData& data, const ResolvedPriors& pr, GibbsMode mode,
                      const Eigen::MatrixXd& init_scores, const McmcConfig& mcmc, int chain) {
  Rng rng(derive_seed(mcmc.seed, 0x636861696eULL, static_cast<std::uint64_t>(chain)));
  ModelState st = initial_state(data, pr, mode, init_scores, rng);
  ChainOutput out;
  StepOptions opt;
  opt.target_accept = mcmc.target_accept;
  for (int it = 0; it < mcmc.iters; ++it) {
    opt.adapt = it < mcmc.burnin;
    try {
      gibbs_step(st, data, pr, mode, opt, rng);
    } catch (const ValidationError& e) {
      // Inputs were validated up front, so a bad argument here comes from overflowed state.
      std::ostringstream msg;
      msg << "numerical breakdown at iteration " << it << " (" << e.what() << "); last valid iteration " << it - 1;
      throw DivergenceError(msg.str(), it);
    }
    check_finite(st, it);
    if (it >= mcmc.burnin && (it - mcmc.burnin + 1) % mcmc.thin == 0) {
      out.beta0.push_back(st.beta0);
      out.theta2.push_back(st.theta2);
      out.beta_z.push_back(st.beta_z);
      out.phi.push_back(st.phi);
      out.w.push_back(st.eps_weights);
      out.g.push_back(Eigen::Map<const Eigen::VectorXd>(st.gamma.data(), static_cast<Eigen::Index>(st.gamma.size())));
      out.s.push_back(Eigen::Map<const Eigen::VectorXd>(st.sigma.data(), static_cast<Eigen::Index>(st.sigma.size())));
      if (mcmc.store_loglik) out.loglik.push_back(pointwise_loglik(st, data, pr, mode));
    }
  }
  out.accepted = st.mh_accepted;
  out.proposed = st.mh_proposed;
  return out;
}

PosteriorDraws run_chains(const SamplerData& data, const ResolvedPriors& pr, GibbsMode mode,
                          const Eigen::MatrixXd& init_scores, const McmcConfig& mcmc, Estimator estimator) {
  if (mcmc.iters <= mcmc.burnin || mcmc.burnin < 0) throw ValidationError("mcmc: need iters > burnin >= 0");
  if (mcmc.thin < 1) throw ValidationError("mcmc: thin must be >= 1");
  if (mcmc.chains < 1) throw ValidationError("mcmc: chains must be >= 1");

  std::vector<ChainOutput> outputs(mcmc.chains);
  std::vector<std::exception_ptr> errors(mcmc.chains);
  auto work = [&](int c) {
    try {
      outputs[c] = run_chain(data, pr, mode, init_scores, mcmc, c);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (mcmc.chains == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (int c = 0; c < mcmc.chains; ++c) threads.emplace_back(work, c);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  PosteriorDraws d;
  d.tau0 = data.tau0;
  d.estimator = estimator;
  d.mcmc = mcmc;
  int total = 0;
  for (const auto& o : outputs) total += static_cast<int>(o.beta0.size());
  const int p = data.p();
  const int k = data.K();
  d.beta0.resize(total);
  d.theta2.resize(total);
  d.beta_z.resize(total, p);
  d.phi.resize(total, k);
  d.gal_weights.resize(total, pr.K_eps);
  d.gal_gamma.resize(total, pr.K_eps);
  d.gal_sigma.resize(total, pr.K_eps);
  if (mcmc.store_loglik) d.loglik.resize(data.n(), total);
  int row = 0;
  std::vector<long> acc(pr.K_eps, 0), prop(pr.K_eps, 0);
  for (const auto& o : outputs) {
    for (std::size_t t = 0; t < o.beta0.size(); ++t, ++row) {
      d.beta0[row] = o.beta0[t];
      d.theta2[row] = o.theta2[t];
      d.beta_z.row(row) = o.beta_z[t].transpose();
      d.phi.row(row) = o.phi[t].transpose();
      d.gal_weights.row(row) = o.w[t].transpose();
      d.gal_gamma.row(row) = o.g[t].transpose();
      d.gal_sigma.row(row) = o.s[t].transpose();
      if (mcmc.store_loglik) d.loglik.col(row) = o.loglik[t];
    }
    for (int c = 0; c < pr.K_eps; ++c) {
      acc[c] += o.accepted[c];
      prop[c] += o.proposed[c];
    }
  }
  d.mh_acceptance.resize(pr.K_eps);
  for (int c = 0; c < pr.K_eps; ++c)
    d.mh_acceptance[c] = prop[c] > 0 ? static_cast<double>(acc[c]) / static_cast<double>(prop[c]) : 0.0;
  return d;
}

}  // namespace

PosteriorDraws fit_fixed_scores(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                const BasisSystem& basis, const PriorConfig& priors, double tau0, Estimator estimator,
                                const McmcConfig& mcmc) {
  if (scores.rows() != y.size() || z.rows() != y.size()) throw ValidationError("fit: row count mismatch");
  if (scores.cols() != basis.size()) throw ValidationError("fit: score width differs from basis size");
  SamplerData data;
  data.tau0 = tau0;
  data.y = y;
  data.z = z;
  data.x_fixed = scores;
  data.penalty = basis.penalty();
  const ResolvedPriors pr = resolve_priors(priors, data, scores, std::nullopt);
  return run_chains(data, pr, GibbsMode::FixedX, scores, mcmc, estimator);
}

PosteriorDraws fit(const FunctionalDataset& data, const BasisSystem& basis, const PriorConfig& priors, double tau0,
                   Estimator estimator, const McmcConfig& mcmc) {
  data.validate();
  if (data.T() != basis.grid().size()) throw ValidationError("fit: dataset grid differs from basis grid");
  if (estimator != Estimator::Naive && data.J() < 2)
    throw ValidationError("fit: the " + to_string(estimator) + " estimator needs J >= 2 replicates");
  const auto scores = replicate_scores(data, basis);

  if (estimator == Estimator::Naive) {
    Eigen::MatrixXd wbar(data.n(), basis.size());
    for (int i = 0; i < data.n(); ++i) wbar.row(i) = scores[i].colwise().mean();
    return fit_fixed_scores(wbar, data.Z, data.Y, basis, priors, tau0, estimator, mcmc);
  }
  const ScoreDataset rc = rc_calibrate(scores);
  if (estimator == Estimator::Fast) {
    return fit_fixed_scores(rc.xhat_scores, data.Z, data.Y, basis, priors, tau0, estimator, mcmc);
  }

  SamplerData sd;
  sd.tau0 = tau0;
  sd.y = data.Y;
  sd.z = data.Z;
  sd.w_scores = scores;
  sd.penalty = basis.penalty();
  const MomentEstimates mom = moment_estimates(scores);
  const ResolvedPriors pr = resolve_priors(priors, sd, rc.xhat_scores, mom);
  return run_chains(sd, pr, GibbsMode::Full, rc.xhat_scores, mcmc, estimator);
}

double waic(const Eigen::MatrixXd& loglik) {
  const Eigen::Index draws = loglik.cols();
  if (draws < 2) throw ValidationError("waic: need at least two draws");
  double lppd = 0.0;
  double p_waic = 0.0;
  for (Eigen::Index i = 0; i < loglik.rows(); ++i) {
    const Eigen::VectorXd row = loglik.row(i).transpose();
    const double m = row.maxCoeff();
    lppd += m + std::log((row.array() - m).exp().mean());
    const double mean = row.mean();
    p_waic += (row.array() - mean).square().mean();
  }
  return -2.0 * (lppd - p_waic);
}

double waic(const PosteriorDraws& draws) {
  if (draws.loglik.size() == 0) throw ValidationError("waic: draws carry no log-likelihood matrix");
  return waic(draws.loglik);
}

Eigen::VectorXd posterior_mean_phi(const PosteriorDraws& draws) {
  if (draws.draws() == 0) throw ValidationError("posterior_mean_phi: no draws");
  return draws.phi.colwise().mean().transpose();
}

}  // namespace sofqr
