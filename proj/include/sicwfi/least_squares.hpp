#pragma once

#include <functional>

#include <Eigen/Core>

namespace sicwfi {

/// Fills r (sized by the caller) with the residuals at parameters p.
using ResidualFn = std::function<void(const Eigen::VectorXd& p, Eigen::VectorXd& r)>;

struct LsqOptions {
  int max_evaluations = 4000;
  double xtol = 1e-12;
  double ftol = 1e-14;
  double diff_step = 1e-7;  // relative central-difference step for the Jacobian
  // Residuals are already divided by known standard deviations: report
  // (J^T J)^-1 instead of scaling it by the reduced chi-square.
  bool absolute_sigma = false;
};

struct LsqResult {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd residuals;
  double rss = 0.0;
  int dof = 0;
  int status = 0;  // Eigen LevenbergMarquardtSpace::Status
  bool converged = false;
  int evaluations = 0;

  Eigen::VectorXd sigma() const { return covariance.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

/// Levenberg-Marquardt with a central-difference Jacobian; the covariance is
/// s^2 (J^T J)^+ at the solution with s^2 = rss / dof.
LsqResult least_squares(const ResidualFn& fn, int n_residuals, const Eigen::VectorXd& p0,
                        const LsqOptions& options = {});

/// Central-difference Jacobian of fn at p.
Eigen::MatrixXd numeric_jacobian(const ResidualFn& fn, int n_residuals, const Eigen::VectorXd& p,
                                 double rel_step = 1e-7);

}  // namespace sicwfi
