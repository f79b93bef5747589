#include "sofqr/basis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "sofqr/numerics.hpp"

namespace sofqr {

namespace {

// Index i with knots[i] <= t < knots[i + 1], clamped to the last non-empty span.
int find_span(const Eigen::VectorXd& knots, int num_basis, int degree, double t) {
  if (t >= knots[num_basis]) return num_basis - 1;
  const auto* begin = knots.data() + degree;
  const auto* end = knots.data() + num_basis + 1;
  const auto* it = std::upper_bound(begin, end, t);
  return static_cast<int>(it - knots.data()) - 1;
}

// Non-zero basis values N_{span-degree..span}(t) (Piegl & Tiller A2.2).
void nonzero_basis(const Eigen::VectorXd& knots, int span, int degree, double t, double* out) {
  std::vector<double> left(degree + 1), right(degree + 1);
  out[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[j] = t - knots[span + 1 - j];
    right[j] = knots[span + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

}  // namespace

Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& grid) {
  const Eigen::Index n = grid.size();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j + 1 < n; ++j) {
    const double h = grid[j + 1] - grid[j];
    w[j] += 0.5 * h;
    w[j + 1] += 0.5 * h;
  }
  return w;
}

Eigen::MatrixXd second_difference_matrix(int num_basis) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(std::max(num_basis - 2, 0), num_basis);
  for (int r = 0; r + 2 < num_basis; ++r) {
    d(r, r) = 1.0;
    d(r, r + 1) = -2.0;
    d(r, r + 2) = 1.0;
  }
  return d;
}

int default_num_basis(int grid_size, int degree) {
  return std::max(std::min(15, grid_size / 4), degree + 2);
}

BasisSystem::BasisSystem(Eigen::VectorXd grid, int num_basis, int degree)
    : grid_(std::move(grid)), num_basis_(num_basis), degree_(degree) {
  const Eigen::Index t_count = grid_.size();
  if (degree_ < 1) throw ValidationError("build_basis: degree must be >= 1");
  const int min_basis = std::max(degree_ + 1, 3);
  if (num_basis_ < min_basis) {
    std::ostringstream msg;
    msg << "build_basis: need at least " << min_basis << " basis functions for degree " << degree_;
    throw ValidationError(msg.str());
  }
  if (t_count < num_basis_) {
    std::ostringstream msg;
    msg << "build_basis: " << num_basis_ << " basis functions exceed the grid size " << t_count;
    throw ValidationError(msg.str());
  }
  for (Eigen::Index j = 0; j < t_count; ++j) {
    if (!std::isfinite(grid_[j])) throw ValidationError("build_basis: non-finite grid point");
    if (j > 0 && !(grid_[j] > grid_[j - 1]))
      throw ValidationError("build_basis: grid must be strictly increasing");
  }

  const double lo = grid_[0];
  const double hi = grid_[t_count - 1];
  const int interior = num_basis_ - degree_ - 1;
  knots_.resize(num_basis_ + degree_ + 1);
  for (int i = 0; i <= degree_; ++i) {
    knots_[i] = lo;
    knots_[num_basis_ + i] = hi;
  }
  for (int j = 1; j <= interior; ++j) knots_[degree_ + j] = lo + (hi - lo) * j / (interior + 1);

  basis_matrix_ = evaluate(grid_);
  quad_weights_ = trapezoid_weights(grid_);
  weighted_basis_ = quad_weights_.asDiagonal() * basis_matrix_;
  const Eigen::MatrixXd d = second_difference_matrix(num_basis_);
  penalty_ = d.transpose() * d;
}

Eigen::MatrixXd BasisSystem::evaluate(const Eigen::VectorXd& t) const {
  const double lo = knots_[0];
  const double hi = knots_[num_basis_];
  const double slack = 1e-12 * std::max(1.0, hi - lo);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(t.size(), num_basis_);
  std::vector<double> values(degree_ + 1);
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    double x = t[j];
    if (!(x >= lo - slack && x <= hi + slack)) {
      std::ostringstream msg;
      msg << "basis evaluation at " << x << " outside [" << lo << ", " << hi << "]";
      throw ValidationError(msg.str());
    }
    x = std::clamp(x, lo, hi);
    const int span = find_span(knots_, num_basis_, degree_, x);
    nonzero_basis(knots_, span, degree_, x, values.data());
    for (int r = 0; r <= degree_; ++r) out(j, span - degree_ + r) = values[r];
  }
  return out;
}

BasisSystem build_basis(const Eigen::VectorXd& grid, int num_basis, int degree) {
  return BasisSystem(grid, num_basis, degree);
}

Eigen::VectorXd project_curve(const Eigen::VectorXd& values, const BasisSystem& basis) {
  if (values.size() != basis.grid().size()) {
    std::ostringstream msg;
    msg << "project_curve: curve has " << values.size() << " points, grid has " << basis.grid().size();
    throw ValidationError(msg.str());
  }
  return basis.weighted_basis().transpose() * values;
}

Eigen::MatrixXd project_curves(const Eigen::MatrixXd& curves, const BasisSystem& basis) {
  if (curves.cols() != basis.grid().size()) throw ValidationError("project_curves: grid size mismatch");
  return curves * basis.weighted_basis();
}

Eigen::VectorXd linear_functional_row(const BasisSystem& basis) {
  return basis.weighted_basis().colwise().sum().transpose();
}

Eigen::VectorXd eval_beta(const Eigen::VectorXd& coefs, const BasisSystem& basis,
                          const Eigen::VectorXd& tgrid) {
  if (coefs.size() != basis.size()) throw ValidationError("eval_beta: coefficient length mismatch");
  return basis.evaluate(tgrid) * coefs;
}

Eigen::VectorXd eval_beta(const CoefCurve& curve, const Eigen::VectorXd& tgrid) {
  if (!curve.basis) throw ValidationError("eval_beta: curve has no basis");
  return eval_beta(curve.coefs, *curve.basis, tgrid);
}

}  // namespace sofqr
