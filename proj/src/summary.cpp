#include "sofqr/summary.hpp"

#include <iomanip>
#include <sstream>

#include "sofqr/numerics.hpp"

namespace sofqr {

namespace {

struct Interval {
  double mean, lower, upper;
};

Interval interval(const Eigen::VectorXd& v, double level) {
  const double tail = 0.5 * (1.0 - level);
  const std::span<const double> s(v.data(), static_cast<std::size_t>(v.size()));
  return {v.mean(), empirical_quantile(s, tail), empirical_quantile(s, 1.0 - tail)};
}

}  // namespace

SummaryTables summarize(const PosteriorDraws& draws, const BasisSystem& basis, const Eigen::VectorXd& eval_grid,
                        double level, const std::vector<std::string>& covariate_names) {
  if (draws.draws() < kMinSummaryDraws) {
    throw ValidationError("summarize: " + std::to_string(draws.draws()) + " draws retained, need at least " +
                          std::to_string(kMinSummaryDraws));
  }
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("summarize: level must lie in (0, 1)");
  if (draws.phi.cols() != basis.size()) throw ValidationError("summarize: draws do not match the basis size");
  const auto p = draws.beta_z.cols();
  if (!covariate_names.empty() && static_cast<Eigen::Index>(covariate_names.size()) != p)
    throw ValidationError("summarize: covariate name count differs from p");

  SummaryTables out;
  const Interval b0 = interval(draws.beta0, level);
  out.scalars.push_back({"intercept", draws.tau0, b0.mean, b0.lower, b0.upper});
  for (Eigen::Index k = 0; k < p; ++k) {
    const Interval iv = interval(draws.beta_z.col(k), level);
    const std::string name = covariate_names.empty() ? "z_" + std::to_string(k + 1) : covariate_names[k];
    out.scalars.push_back({name, draws.tau0, iv.mean, iv.lower, iv.upper});
  }

  const Eigen::MatrixXd curves = draws.phi * basis.evaluate(eval_grid).transpose();  // D x G
  for (Eigen::Index g = 0; g < eval_grid.size(); ++g) {
    const Interval iv = interval(curves.col(g), level);
    out.bands.push_back({draws.tau0, eval_grid[g], iv.mean, iv.lower, iv.upper});
  }
  if (draws.loglik.size() > 0) {
    out.waic = waic(draws.loglik);
    out.has_waic = true;
  }
  return out;
}

std::string scalar_table_csv(const std::vector<ScalarSummary>& rows) {
  std::ostringstream out;
  out << std::setprecision(10) << "term,tau,mean,lower,upper\n";
  for (const auto& r : rows) out << r.term << ',' << r.tau << ',' << r.mean << ',' << r.lower << ',' << r.upper << '\n';
  return out.str();
}

std::string band_table_csv(const std::vector<BandPoint>& rows) {
  std::ostringstream out;
  out << std::setprecision(10) << "tau,t,mean,lower,upper\n";
  for (const auto& r : rows) out << r.tau << ',' << r.t << ',' << r.mean << ',' << r.lower << ',' << r.upper << '\n';
  return out.str();
}

}  // namespace sofqr
