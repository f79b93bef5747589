#include "sofqr/calibration.hpp"

#include <cmath>
#include <sstream>

#include "sofqr/numerics.hpp"

namespace sofqr {

void FunctionalDataset::validate() const {
  const int t = T();
  if (t < 2) throw ValidationError("dataset: grid needs at least two points");
  for (int j = 1; j < t; ++j) {
    if (!(grid[j] > grid[j - 1])) throw ValidationError("dataset: grid must be strictly increasing");
  }
  if (W.empty()) throw ValidationError("dataset: no subjects");
  const int reps = J();
  if (reps < 1) throw ValidationError("dataset: need at least one replicate");
  for (int i = 0; i < n(); ++i) {
    if (W[i].rows() != reps || W[i].cols() != t) {
      std::ostringstream msg;
      msg << "dataset: subject " << i << " has a " << W[i].rows() << " x " << W[i].cols()
          << " replicate block, expected " << reps << " x " << t;
      throw ValidationError(msg.str());
    }
  }
  if (Y.size() != n()) throw ValidationError("dataset: response length differs from subject count");
  if (Z.rows() != n()) throw ValidationError("dataset: covariate rows differ from subject count");
  if (X_true && (X_true->rows() != n() || X_true->cols() != t))
    throw ValidationError("dataset: X_true has the wrong shape");
}

Eigen::MatrixXd FunctionalDataset::replicate_means() const {
  Eigen::MatrixXd out(n(), T());
  for (int i = 0; i < n(); ++i) out.row(i) = W[i].colwise().mean();
  return out;
}

std::vector<Eigen::MatrixXd> replicate_scores(const FunctionalDataset& data, const BasisSystem& basis) {
  if (data.T() != basis.grid().size()) throw ValidationError("replicate_scores: grid size mismatch");
  std::vector<Eigen::MatrixXd> out;
  out.reserve(data.n());
  for (const auto& w : data.W) out.push_back(project_curves(w, basis));
  return out;
}

Eigen::MatrixXd naive_scores(const FunctionalDataset& data, const BasisSystem& basis) {
  data.validate();
  return project_curves(data.replicate_means(), basis);
}

MomentEstimates moment_estimates(const std::vector<Eigen::MatrixXd>& scores) {
  const int n = static_cast<int>(scores.size());
  if (n < 2) throw ValidationError("moment_estimates: need at least two subjects");
  const int reps = static_cast<int>(scores.front().rows());
  const int k = static_cast<int>(scores.front().cols());
  if (reps < 2) throw ValidationError("moment_estimates: replicates required (J >= 2)");

  Eigen::MatrixXd wbar(n, k);
  Eigen::MatrixXd within = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < n; ++i) {
    const Eigen::RowVectorXd mean = scores[i].colwise().mean();
    wbar.row(i) = mean;
    const Eigen::MatrixXd centered = scores[i].rowwise() - mean;
    within.noalias() += centered.transpose() * centered;
  }

  MomentEstimates out;
  out.mu_x = wbar.colwise().mean().transpose();
  const Eigen::MatrixXd centered = wbar.rowwise() - out.mu_x.transpose();
  out.s_between = centered.transpose() * centered / static_cast<double>(n - 1);
  out.sigma_u = within / static_cast<double>(n * (reps - 1));
  out.sigma_u = 0.5 * (out.sigma_u + out.sigma_u.transpose());

  Eigen::MatrixXd raw = out.s_between - out.sigma_u / static_cast<double>(reps);
  raw = 0.5 * (raw + raw.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(raw);
  Eigen::VectorXd values = eig.eigenvalues();
  for (Eigen::Index j = 0; j < values.size(); ++j) {
    if (values[j] < 0.0) {
      values[j] = 0.0;
      ++out.clipped_eigenvalues;
    }
  }
  if (out.clipped_eigenvalues > 0) {
    out.sigma_x = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
    out.sigma_x = 0.5 * (out.sigma_x + out.sigma_x.transpose());
  } else {
    out.sigma_x = raw;
  }
  return out;
}

MomentEstimates moment_estimates(const FunctionalDataset& data, const BasisSystem& basis) {
  data.validate();
  if (data.J() < 2) throw ValidationError("moment_estimates: replicates required (J >= 2)");
  return moment_estimates(replicate_scores(data, basis));
}

Eigen::MatrixXd blup_scores(const Eigen::MatrixXd& wbar, const Eigen::VectorXd& mu_x,
                            const Eigen::MatrixXd& sigma_x, const Eigen::MatrixXd& sigma_u, int J) {
  if (J < 1) throw ValidationError("blup_scores: J must be >= 1");
  Eigen::MatrixXd m = sigma_x + sigma_u / static_cast<double>(J);
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  double lo = eig.eigenvalues().minCoeff();
  double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 1e-12 * hi)) {
    m.diagonal().array() += 1e-10 * std::max(hi, 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> again(m, Eigen::EigenvaluesOnly);
    lo = again.eigenvalues().minCoeff();
    hi = again.eigenvalues().maxCoeff();
  }
  const double cond = hi / lo;
  if (!(lo > 0.0) || !std::isfinite(cond) || cond > 1e15) {
    std::ostringstream msg;
    msg << "rc_calibrate: calibration matrix singular after jitter (condition number " << cond << ")";
    throw ValidationError(msg.str());
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  const Eigen::MatrixXd gain = ldlt.solve(sigma_x);  // M^{-1} Sx
  const Eigen::MatrixXd centered = wbar.rowwise() - mu_x.transpose();
  return (centered * gain).rowwise() + mu_x.transpose();
}

ScoreDataset rc_calibrate(const std::vector<Eigen::MatrixXd>& scores) {
  const MomentEstimates mom = moment_estimates(scores);
  ScoreDataset out;
  out.J = static_cast<int>(scores.front().rows());
  const int n = static_cast<int>(scores.size());
  out.wbar_scores.resize(n, scores.front().cols());
  for (int i = 0; i < n; ++i) out.wbar_scores.row(i) = scores[i].colwise().mean();
  out.mu_x_hat = mom.mu_x;
  out.sigma_x_hat = mom.sigma_x;
  out.sigma_u_hat = mom.sigma_u;
  out.xhat_scores = blup_scores(out.wbar_scores, mom.mu_x, mom.sigma_x, mom.sigma_u, out.J);
  return out;
}

ScoreDataset rc_calibrate(const FunctionalDataset& data, const BasisSystem& basis) {
  data.validate();
  if (data.J() < 2) throw ValidationError("rc_calibrate: replicates required (J >= 2)");
  return rc_calibrate(replicate_scores(data, basis));
}

}  // namespace sofqr
