#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sofqr/basis.hpp"
#include "sofqr/data.hpp"

namespace sofqr {

/// Method-of-moments estimates on projected replicate scores.
struct MomentEstimates {
  Eigen::VectorXd mu_x;
  Eigen::MatrixXd sigma_x;   // between-subject minus noise/J, clipped PSD
  Eigen::MatrixXd sigma_u;   // pooled within-subject covariance
  Eigen::MatrixXd s_between; // raw sample covariance of the replicate means
  int clipped_eigenvalues = 0;
};

struct ScoreDataset {
  Eigen::MatrixXd wbar_scores;  // n x K
  Eigen::MatrixXd xhat_scores;  // n x K
  Eigen::MatrixXd sigma_x_hat;
  Eigen::MatrixXd sigma_u_hat;
  Eigen::VectorXd mu_x_hat;
  int J = 0;
};

/// Projected scores of every replicate: n entries of J x K.
std::vector<Eigen::MatrixXd> replicate_scores(const FunctionalDataset& data, const BasisSystem& basis);

/// project_curve applied to the replicate mean of each subject.
Eigen::MatrixXd naive_scores(const FunctionalDataset& data, const BasisSystem& basis);

MomentEstimates moment_estimates(const std::vector<Eigen::MatrixXd>& scores);
MomentEstimates moment_estimates(const FunctionalDataset& data, const BasisSystem& basis);

/// Best linear predictor mu + Sx (Sx + Su/J)^{-1} (wbar - mu), row-wise.
Eigen::MatrixXd blup_scores(const Eigen::MatrixXd& wbar, const Eigen::VectorXd& mu_x,
                            const Eigen::MatrixXd& sigma_x, const Eigen::MatrixXd& sigma_u, int J);

ScoreDataset rc_calibrate(const std::vector<Eigen::MatrixXd>& scores);
ScoreDataset rc_calibrate(const FunctionalDataset& data, const BasisSystem& basis);

}  // namespace sofqr
