#pragma once

// Posterior summaries: scalar coefficient table, pointwise bands for beta(t)
// and WAIC.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sofqr/basis.hpp"
#include "sofqr/sampler.hpp"

namespace sofqr {

struct ScalarSummary {
  std::string term;  // "intercept" or a covariate name
  double tau = 0.5;
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct BandPoint {
  double tau = 0.5;
  double t = 0.0;
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct SummaryTables {
  std::vector<ScalarSummary> scalars;
  std::vector<BandPoint> bands;
  double waic = 0.0;
  bool has_waic = false;
};

inline constexpr int kMinSummaryDraws = 100;

/// Equal-tailed intervals at `level` from the empirical draw quantiles.
/// Needs at least kMinSummaryDraws draws.
SummaryTables summarize(const PosteriorDraws& draws, const BasisSystem& basis, const Eigen::VectorXd& eval_grid,
                        double level = 0.95, const std::vector<std::string>& covariate_names = {});

std::string scalar_table_csv(const std::vector<ScalarSummary>& rows);
std::string band_table_csv(const std::vector<BandPoint>& rows);

}  // namespace sofqr
