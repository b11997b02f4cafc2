#include <nanotomo/least_squares.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace nanotomo {

LeastSquaresResult levenberg_marquardt(const ResidualFn &fn, Eigen::VectorXd x, const LeastSquaresOptions &opts) {
  LeastSquaresResult out;
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  if (!fn(x, r, J)) {
    out.params = x;
    out.chi2 = std::numeric_limits<double>::infinity();
    return out;
  }
  double chi2 = r.squaredNorm();
  double lambda = 1e-3;
  const auto n = x.size();

  for (int it = 0; it < opts.max_iterations; ++it) {
    out.iterations = it + 1;
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    if (g.lpNorm<Eigen::Infinity>() < opts.gradient_tolerance) {
      out.converged = true;
      break;
    }

    bool accepted = false;
    double rel = 0.0, step_norm = 0.0;
    while (lambda < 1e20) {
      Eigen::MatrixXd A = JtJ;
      for (Eigen::Index i = 0; i < n; ++i)
        A(i, i) += lambda * std::max(JtJ(i, i), 1e-30);
      const Eigen::VectorXd step = A.ldlt().solve(-g);
      Eigen::VectorXd trial = x + step;
      Eigen::VectorXd r_trial;
      Eigen::MatrixXd J_trial;
      if (step.allFinite() && fn(trial, r_trial, J_trial)) {
        const double chi2_trial = r_trial.squaredNorm();
        if (chi2_trial <= chi2) {
          rel = (chi2 - chi2_trial) / std::max(chi2, 1e-300);
          step_norm = step.norm() / (x.norm() + opts.step_tolerance);
          x = std::move(trial);
          r = std::move(r_trial);
          J = std::move(J_trial);
          chi2 = chi2_trial;
          lambda = std::max(lambda * 0.1, 1e-15);
          accepted = true;
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!accepted || rel < opts.relative_tolerance || step_norm < opts.step_tolerance) {
      out.converged = true;
      break;
    }
  }

  out.params = x;
  out.chi2 = chi2;
  const Eigen::MatrixXd JtJ = J.transpose() * J;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(JtJ);
  out.covariance = lu.isInvertible() ? Eigen::MatrixXd(lu.inverse())
                                     : Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::infinity());
  return out;
}

} // namespace nanotomo
