#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace sofqr {

/// Replicated functional proxies W_ij(t) on a common grid, scalar
/// covariates Z and responses Y.
struct FunctionalDataset {
  Eigen::VectorXd grid;                  // T points, strictly increasing
  std::vector<Eigen::MatrixXd> W;        // n entries, each J x T
  Eigen::MatrixXd Z;                     // n x p
  Eigen::VectorXd Y;                     // n
  std::optional<Eigen::MatrixXd> X_true; // n x T, simulation only
  std::vector<std::string> subject_ids;  // optional labels, empty or n long
  std::vector<std::string> covariate_names;
  /// Optional per-subject J x T flags (nonzero = invalid entry); empty means all valid.
  std::vector<Eigen::MatrixXi> invalid;

  int n() const { return static_cast<int>(W.size()); }
  int J() const { return W.empty() ? 0 : static_cast<int>(W.front().rows()); }
  int T() const { return static_cast<int>(grid.size()); }
  int p() const { return static_cast<int>(Z.cols()); }

  /// Throws ValidationError on inconsistent dimensions or a bad grid.
  void validate() const;
  /// Per-subject replicate averages, n x T.
  Eigen::MatrixXd replicate_means() const;
};

}  // namespace sofqr
