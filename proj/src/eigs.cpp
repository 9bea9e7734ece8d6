#include "sicwfi/eigs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseLU>

#include "sicwfi/error.hpp"

namespace sicwfi {

namespace {

struct RitzPairs {
  Eigen::VectorXd mu;  // eigenvalues of the shift-inverted operator
  Eigen::MatrixXd y;   // coefficient vectors in the search basis
};

RitzPairs rayleigh_ritz(const Eigen::MatrixXd& h, bool symmetric) {
  const Eigen::Index m = h.rows();
  RitzPairs out;
  std::vector<Eigen::Index> order(m);
  std::iota(order.begin(), order.end(), 0);
  Eigen::VectorXd mu(m);
  Eigen::MatrixXd y(m, m);
  if (symmetric) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (h + h.transpose()));
    mu = es.eigenvalues();
    y = es.eigenvectors();
  } else {
    Eigen::EigenSolver<Eigen::MatrixXd> es(h);
    mu = es.eigenvalues().real();
    y = es.eigenvectors().real();
    for (Eigen::Index c = 0; c < m; ++c) {
      const double n = y.col(c).norm();
      if (n > 0.0) y.col(c) /= n;
    }
  }
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return std::abs(mu(a)) > std::abs(mu(b)); });
  out.mu.resize(m);
  out.y.resize(m, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    out.mu(k) = mu(order[k]);
    out.y.col(k) = y.col(order[k]);
  }
  return out;
}

}  // namespace

EigsResult eigs_shift_invert(const Eigen::SparseMatrix<double>& a, double shift, int count,
                             const EigsOptions& options, const Eigen::MatrixXd& warm_start) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) fail(ErrorCode::invalid_argument, "eigs: matrix must be square");
  if (count < 1) fail(ErrorCode::invalid_argument, "eigs: requested pair count must be >= 1");
  count = static_cast<int>(std::min<Eigen::Index>(count, n));
  int m = options.subspace > 0 ? options.subspace : std::max(2 * count + 8, 20);
  m = static_cast<int>(std::min<Eigen::Index>(std::max(m, count + 2), n));

  Eigen::SparseMatrix<double> shifted = a;
  for (Eigen::Index k = 0; k < n; ++k) shifted.coeffRef(k, k) -= shift;
  shifted.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(shifted);
  if (lu.info() != Eigen::Success) {
    fail(ErrorCode::solver_budget, "eigs: factorization of the shifted operator failed");
  }

  EigsResult result;
  Eigen::MatrixXd v(n, m), w(n, m);
  int k = 0;
  std::mt19937_64 rng(0x5eedULL);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  auto random_vector = [&] {
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = unif(rng);
    return r;
  };
  auto append = [&](Eigen::VectorXd x) {
    const double initial = x.norm();
    if (!(initial > 0.0)) return false;
    for (int pass = 0; pass < 2 && k > 0; ++pass) {
      x -= v.leftCols(k) * (v.leftCols(k).transpose() * x);
    }
    const double norm = x.norm();
    if (!(norm > 1e-10 * initial)) return false;
    v.col(k) = x / norm;
    w.col(k) = lu.solve(v.col(k).eval());
    ++result.operator_applications;
    ++k;
    return true;
  };

  for (Eigen::Index c = 0; c < warm_start.cols() && k < m - 1; ++c) {
    if (warm_start.rows() == n) append(warm_start.col(c));
  }
  if (k == 0) append(random_vector());

  const int keep = std::min(m - 2, count + std::max(2, count / 2));
  Eigen::VectorXd next;
  double worst = 0.0;
  for (int restart = 0; restart <= options.max_restarts; ++restart) {
    while (k < m) {
      Eigen::VectorXd candidate = next.size() == n ? next : w.col(k - 1);
      next.resize(0);
      if (!append(candidate)) {
        while (!append(random_vector())) {
        }
      }
    }
    const Eigen::MatrixXd h = v.transpose() * w;
    const RitzPairs ritz = rayleigh_ritz(h, options.symmetric);
    const Eigen::MatrixXd x = v * ritz.y.leftCols(keep);
    const Eigen::MatrixXd opx = w * ritz.y.leftCols(keep);

    Eigen::VectorXd rel(count);
    int first_unconverged = -1;
    worst = 0.0;
    for (int c = 0; c < count; ++c) {
      const double mu = ritz.mu(c);
      rel(c) = (opx.col(c) - mu * x.col(c)).norm() / std::max(std::abs(mu), 1e-300);
      const bool exempt = shift + 1.0 / mu < options.floor;
      if (exempt) continue;
      worst = std::max(worst, rel(c));
      if (rel(c) > options.tolerance && first_unconverged < 0) first_unconverged = c;
    }
    if (first_unconverged < 0) {
      result.restarts = restart;
      std::vector<int> order(count);
      std::iota(order.begin(), order.end(), 0);
      Eigen::VectorXd lambda(count);
      for (int c = 0; c < count; ++c) lambda(c) = shift + 1.0 / ritz.mu(c);
      std::sort(order.begin(), order.end(), [&](int p, int q) { return lambda(p) > lambda(q); });
      result.values.resize(count);
      result.vectors.resize(n, count);
      result.residuals.resize(count);
      for (int c = 0; c < count; ++c) {
        result.values(c) = lambda(order[c]);
        result.vectors.col(c) = x.col(order[c]).normalized();
        result.residuals(c) = rel(order[c]);
      }
      return result;
    }

    // Thick restart: keep the leading Ritz vectors, re-orthonormalized,
    // with their operator images transformed alongside.
    Eigen::MatrixXd xs = x, ws = opx;
    k = 0;
    for (int c = 0; c < keep; ++c) {
      Eigen::VectorXd xc = xs.col(c), wc = ws.col(c);
      for (int pass = 0; pass < 2; ++pass) {
        for (int p = 0; p < k; ++p) {
          const double proj = v.col(p).dot(xc);
          xc -= proj * v.col(p);
          wc -= proj * w.col(p);
        }
      }
      const double norm = xc.norm();
      if (norm < 1e-10) continue;
      v.col(k) = xc / norm;
      w.col(k) = wc / norm;
      ++k;
    }
    next = opx.col(first_unconverged) - ritz.mu(first_unconverged) * x.col(first_unconverged);
  }
  std::ostringstream msg;
  msg << "eigs: " << count << " pairs not converged after " << options.max_restarts
      << " restarts; worst relative residual " << worst;
  fail(ErrorCode::solver_budget, msg.str());
}

}  // namespace sicwfi
