#pragma once

#include <Eigen/Dense>
#include <memory>

namespace sofqr {

/// B-spline system on a fixed observation grid: basis matrix, trapezoid
/// quadrature weights and the second-order difference penalty P = D'D.
/// Immutable after construction.
class BasisSystem {
 public:
  BasisSystem(Eigen::VectorXd grid, int num_basis, int degree = 3);

  const Eigen::VectorXd& grid() const { return grid_; }
  int degree() const { return degree_; }
  int size() const { return num_basis_; }
  const Eigen::VectorXd& knots() const { return knots_; }
  /// T x K matrix of b_k(t_j).
  const Eigen::MatrixXd& basis_matrix() const { return basis_matrix_; }
  const Eigen::VectorXd& quad_weights() const { return quad_weights_; }
  const Eigen::MatrixXd& penalty() const { return penalty_; }
  /// T x K matrix with rows w_j b(t_j); curve scores are its transpose times the curve.
  const Eigen::MatrixXd& weighted_basis() const { return weighted_basis_; }

  /// Basis values at arbitrary points inside [t_1, t_T]; one row per point.
  Eigen::MatrixXd evaluate(const Eigen::VectorXd& t) const;

 private:
  Eigen::VectorXd grid_;
  int num_basis_;
  int degree_;
  Eigen::VectorXd knots_;
  Eigen::MatrixXd basis_matrix_;
  Eigen::VectorXd quad_weights_;
  Eigen::MatrixXd penalty_;
  Eigen::MatrixXd weighted_basis_;
};

/// Spline coefficients phi of beta(t) = sum_k phi_k b_k(t).
struct CoefCurve {
  Eigen::VectorXd coefs;
  std::shared_ptr<const BasisSystem> basis;
};

BasisSystem build_basis(const Eigen::VectorXd& grid, int num_basis, int degree = 3);

/// min(15, floor(T / 4)), but never below degree + 2.
int default_num_basis(int grid_size, int degree = 3);

Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& grid);
Eigen::MatrixXd second_difference_matrix(int num_basis);

/// Quadrature inner products int b_k(t) f(t) dt on the basis grid.
Eigen::VectorXd project_curve(const Eigen::VectorXd& values, const BasisSystem& basis);
/// Row-wise project_curve for an m x T matrix of curves.
Eigen::MatrixXd project_curves(const Eigen::MatrixXd& curves, const BasisSystem& basis);

/// r with int beta(t) dt = r' phi, i.e. r_k = int b_k(t) dt.
Eigen::VectorXd linear_functional_row(const BasisSystem& basis);

/// beta(t) = sum_k phi_k b_k(t) on the requested points. With this reading
/// int beta(t) X(t) dt = phi' project_curve(X) up to quadrature, so the
/// projected scores are the design row of the functional term.
Eigen::VectorXd eval_beta(const CoefCurve& curve, const Eigen::VectorXd& tgrid);
Eigen::VectorXd eval_beta(const Eigen::VectorXd& coefs, const BasisSystem& basis,
                          const Eigen::VectorXd& tgrid);

}  // namespace sofqr
