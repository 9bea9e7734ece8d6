#include "sicwfi/least_squares.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <unsupported/Eigen/LevenbergMarquardt>

#include "sicwfi/error.hpp"

namespace sicwfi {

namespace {

struct Functor : Eigen::DenseFunctor<double> {
  const ResidualFn* fn;
  double step;
  mutable int calls = 0;

  Functor(const ResidualFn& f, int inputs, int values, double rel_step)
      : Eigen::DenseFunctor<double>(inputs, values), fn(&f), step(rel_step) {}

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
    r.resize(values());
    (*fn)(x, r);
    ++calls;
    return r.allFinite() ? 0 : -1;
  }

  int df(const Eigen::VectorXd& x, Eigen::MatrixXd& j) const {
    j = numeric_jacobian(*fn, values(), x, step);
    calls += 2 * inputs();
    return j.allFinite() ? 0 : -1;
  }
};

}  // namespace

Eigen::MatrixXd numeric_jacobian(const ResidualFn& fn, int n_residuals, const Eigen::VectorXd& p,
                                 double rel_step) {
  Eigen::MatrixXd j(n_residuals, p.size());
  Eigen::VectorXd hi(n_residuals), lo(n_residuals);
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const double h = rel_step * std::max(std::abs(p(k)), 1e-3);
    Eigen::VectorXd q = p;
    q(k) = p(k) + h;
    fn(q, hi);
    q(k) = p(k) - h;
    fn(q, lo);
    j.col(k) = (hi - lo) / (2.0 * h);
  }
  return j;
}

LsqResult least_squares(const ResidualFn& fn, int n_residuals, const Eigen::VectorXd& p0,
                        const LsqOptions& options) {
  const int n = static_cast<int>(p0.size());
  if (n < 1 || n_residuals < n) {
    fail(ErrorCode::insufficient_data, "fewer residuals than fit parameters");
  }
  Functor f(fn, n, n_residuals, options.diff_step);
  Eigen::LevenbergMarquardt<Functor> lm(f);
  lm.setMaxfev(options.max_evaluations);
  lm.setXtol(options.xtol);
  lm.setFtol(options.ftol);
  Eigen::VectorXd x = p0;
  const auto status = lm.minimize(x);

  LsqResult out;
  out.params = x;
  out.status = static_cast<int>(status);
  out.evaluations = f.calls;
  out.residuals.resize(n_residuals);
  fn(x, out.residuals);
  out.rss = out.residuals.squaredNorm();
  out.dof = n_residuals - n;
  using S = Eigen::LevenbergMarquardtSpace::Status;
  out.converged = x.allFinite() && std::isfinite(out.rss) && status != S::ImproperInputParameters &&
                  status != S::TooManyFunctionEvaluation && status != S::UserAsked;
  const Eigen::MatrixXd j = numeric_jacobian(fn, n_residuals, x, options.diff_step);
  // Equilibrate the columns first: parameters in Hz next to ones of order unity
  // would otherwise fall under the pseudo-inverse rank threshold.
  Eigen::VectorXd scale = j.colwise().norm().transpose();
  for (Eigen::Index k = 0; k < scale.size(); ++k) {
    if (!(scale(k) > 0.0)) scale(k) = 1.0;
  }
  const Eigen::MatrixXd js = j * scale.cwiseInverse().asDiagonal();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(js.transpose() * js);
  const double s2 = options.absolute_sigma ? 1.0 : (out.dof > 0 ? out.rss / out.dof : 0.0);
  const Eigen::VectorXd inv = scale.cwiseInverse();
  out.covariance = s2 * (inv.asDiagonal() * cod.pseudoInverse() * inv.asDiagonal());
  return out;
}

}  // namespace sicwfi
