#pragma once

#include <limits>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace sicwfi {

struct EigsOptions {
  int subspace = 0;         // search-space size; 0 picks max(2*count + 8, 20)
  int max_restarts = 60;
  double tolerance = 1e-10;  // relative residual of the shift-inverted problem
  bool symmetric = false;    // A is symmetric: use a self-adjoint projection
  // Pairs whose Ritz value lies below `floor` are returned without having to
  // meet `tolerance` (callers discard them anyway).
  double floor = -std::numeric_limits<double>::infinity();
};

struct EigsResult {
  Eigen::VectorXd values;   // eigenvalues of A, descending
  Eigen::MatrixXd vectors;  // unit 2-norm columns
  Eigen::VectorXd residuals;  // ||A v - lambda v|| / |lambda - shift| per pair
  int restarts = 0;
  int operator_applications = 0;
};

/// `count` eigenpairs of a real sparse matrix nearest to `shift`, found by
/// thick-restarted Arnoldi on (A - shift I)^-1. Columns of `warm_start`
/// (when non-empty) seed the search space. Complex Ritz pairs are not
/// supported; their real parts are returned.
///
/// Throws ErrorCode::solver_budget with the worst residual when the pairs do
/// not converge within `max_restarts`.
EigsResult eigs_shift_invert(const Eigen::SparseMatrix<double>& a, double shift, int count,
                             const EigsOptions& options = {},
                             const Eigen::MatrixXd& warm_start = Eigen::MatrixXd());

}  // namespace sicwfi
