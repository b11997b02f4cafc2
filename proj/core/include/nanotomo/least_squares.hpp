#pragma once
#include <Eigen/Dense>
#include <functional>

namespace nanotomo {

/// Model evaluated at parameters `params`: fills the residual vector
/// (already divided by the per-point sigma) and its Jacobian.
/// Returns false when the parameters leave the model's domain.
using ResidualFn = std::function<bool(const Eigen::VectorXd &params, Eigen::VectorXd &residuals,
                                      Eigen::MatrixXd &jacobian)>;

struct LeastSquaresOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-12;
  double relative_tolerance = 1e-14;
  double step_tolerance = 1e-12;
};

struct LeastSquaresResult {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance; ///< (J^T J)^-1 at the optimum, not rescaled by chi2
  double chi2 = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Levenberg-Marquardt minimization of sum(residuals^2).
LeastSquaresResult levenberg_marquardt(const ResidualFn &fn, Eigen::VectorXd start,
                                       const LeastSquaresOptions &opts = {});

} // namespace nanotomo
