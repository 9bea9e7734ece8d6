#include "sicwfi/raman.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "sicwfi/error.hpp"
#include "sicwfi/least_squares.hpp"
#include "sicwfi/parallel.hpp"

namespace sicwfi {

std::string_view raman_mode_name(RamanMode m) {
  switch (m) {
    case RamanMode::e1_to: return "E1(TO)";
    case RamanMode::e2_to: return "E2(TO)";
    case RamanMode::a1_lo: return "A1(LO)";
  }
  return "E2(TO)";
}

RamanMode parse_raman_mode(std::string_view name) {
  if (name == "E1(TO)" || name == "e1") return RamanMode::e1_to;
  if (name == "E2(TO)" || name == "e2") return RamanMode::e2_to;
  if (name == "A1(LO)" || name == "a1") return RamanMode::a1_lo;
  fail(ErrorCode::invalid_argument, "unknown Raman mode '" + std::string(name) + "'");
}

std::array<double, 2> default_window(RamanMode m) {
  switch (m) {
    case RamanMode::e1_to: return {788.0, 808.0};
    case RamanMode::e2_to: return {765.0, 787.0};
    case RamanMode::a1_lo: return {945.0, 985.0};
  }
  return {765.0, 787.0};
}

void RamanSpectrum::validate() const {
  if (wavenumber.size() != counts.size()) {
    fail(ErrorCode::axis_mismatch, "wavenumber and count columns differ in length");
  }
  for (std::size_t k = 0; k < wavenumber.size(); ++k) {
    if (!std::isfinite(wavenumber[k]) || !std::isfinite(counts[k])) {
      fail(ErrorCode::invalid_argument, "spectrum holds non-finite values");
    }
    if (counts[k] < 0.0) fail(ErrorCode::invalid_argument, "spectrum holds negative counts");
    if (k > 0 && !(wavenumber[k] > wavenumber[k - 1])) {
      fail(ErrorCode::invalid_argument, "wavenumbers must increase strictly");
    }
  }
}

double PseudoVoigt::total_fwhm() const {
  const double g = gauss_fwhm, l = lorentz_fwhm;
  return std::pow(std::pow(g, 5) + 2.69269 * std::pow(g, 4) * l + 2.42843 * std::pow(g, 3) * l * l +
                      4.47163 * g * g * std::pow(l, 3) + 0.07842 * g * std::pow(l, 4) +
                      std::pow(l, 5),
                  0.2);
}

double PseudoVoigt::eta() const {
  const double r = lorentz_fwhm / total_fwhm();
  return 1.36603 * r - 0.47719 * r * r + 0.11116 * r * r * r;
}

double PseudoVoigt::operator()(double nu) const {
  const double f = total_fwhm();
  const double e = eta();
  const double u = (nu - center) / f;
  const double lorentz = 1.0 / (1.0 + 4.0 * u * u);
  const double gauss = std::exp(-4.0 * std::log(2.0) * u * u);
  return amplitude * (e * lorentz + (1.0 - e) * gauss) + c0 + c1 * (nu - pivot);
}

namespace {

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  const double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + n / 2));
}

}  // namespace

std::vector<bool> cosmic_mask(const std::vector<double>& counts, const CosmicFilterOptions& options) {
  const std::size_t n = counts.size();
  std::vector<bool> mask(n, false);
  if (n < 3 || options.median_window < 3) return mask;
  const std::size_t half = static_cast<std::size_t>(options.median_window / 2);
  std::vector<double> base(n), dev(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t lo = k >= half ? k - half : 0;
    const std::size_t hi = std::min(n - 1, k + half);
    base[k] = median(std::vector<double>(counts.begin() + lo, counts.begin() + hi + 1));
    dev[k] = counts[k] - base[k];
  }
  std::vector<double> absdev(n);
  const double med_dev = median(dev);
  for (std::size_t k = 0; k < n; ++k) absdev[k] = std::abs(dev[k] - med_dev);
  const double robust = 1.4826 * median(absdev);
  std::vector<bool> flagged(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double sigma = std::max(robust, std::sqrt(std::max(base[k], 0.0)));
    flagged[k] = sigma > 0.0 && dev[k] > options.threshold * sigma;
  }
  for (std::size_t k = 0; k < n;) {
    if (!flagged[k]) {
      ++k;
      continue;
    }
    std::size_t end = k;
    while (end < n && flagged[end]) ++end;
    if (static_cast<int>(end - k) <= options.max_run) {
      for (std::size_t j = k; j < end; ++j) mask[j] = true;
    }
    k = end;
  }
  return mask;
}

PeakFit fit_peak(const RamanSpectrum& spectrum, double lo, double hi, RamanMode label,
                 const PeakFitOptions& options) {
  spectrum.validate();
  if (spectrum.wavenumber.empty()) fail(ErrorCode::invalid_argument, "spectrum is empty");
  if (!(hi > lo) || lo < spectrum.wavenumber.front() || hi > spectrum.wavenumber.back()) {
    std::ostringstream msg;
    msg << "fit window [" << lo << ", " << hi << "] cm^-1 is not inside the spectrum axis";
    fail(ErrorCode::invalid_argument, msg.str());
  }
  std::vector<double> x, y;
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < spectrum.wavenumber.size(); ++k) {
    if (spectrum.wavenumber[k] >= lo && spectrum.wavenumber[k] <= hi) idx.push_back(k);
  }
  if (idx.size() < 10) fail(ErrorCode::invalid_argument, "fewer than 10 samples in the fit window");
  std::vector<double> window_counts;
  for (std::size_t k : idx) window_counts.push_back(spectrum.counts[k]);
  const std::vector<bool> mask = options.reject_cosmics
                                     ? cosmic_mask(window_counts, options.cosmic)
                                     : std::vector<bool>(idx.size(), false);
  PeakFit out;
  out.label = label;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (mask[k]) {
      ++out.rejected_points;
      continue;
    }
    x.push_back(spectrum.wavenumber[idx[k]]);
    y.push_back(spectrum.counts[idx[k]]);
  }
  const int m = static_cast<int>(x.size());
  if (m < 10) fail(ErrorCode::insufficient_data, "fewer than 10 usable samples after spike rejection");
  out.used_points = m;

  // Initial guess: edge baseline, window maximum, half-maximum width.
  const int edge = std::max(1, m / 10);
  double xl = 0, yl = 0, xr = 0, yr = 0;
  for (int k = 0; k < edge; ++k) {
    xl += x[k] / edge;
    yl += y[k] / edge;
    xr += x[m - 1 - k] / edge;
    yr += y[m - 1 - k] / edge;
  }
  const double pivot = 0.5 * (lo + hi);
  const double slope = (yr - yl) / (xr - xl);
  auto baseline = [&](double v) { return yl + slope * (v - xl); };
  int peak = 0;
  for (int k = 1; k < m; ++k) {
    if (y[k] - baseline(x[k]) > y[peak] - baseline(x[peak])) peak = k;
  }
  const double height = y[peak] - baseline(x[peak]);
  int left = peak, right = peak;
  while (left > 0 && y[left] - baseline(x[left]) > 0.5 * height) --left;
  while (right < m - 1 && y[right] - baseline(x[right]) > 0.5 * height) ++right;
  const double step = (x.back() - x.front()) / (m - 1);
  const double width = std::max(x[right] - x[left], 2.0 * step);

  Eigen::VectorXd p0(6);
  p0 << x[peak], std::log(width / 1.6), std::log(width / 1.6), std::max(height, 1e-12),
      baseline(pivot), slope;
  auto model = [&](const Eigen::VectorXd& p) {
    PseudoVoigt v;
    v.center = p(0);
    v.gauss_fwhm = std::exp(p(1));
    v.lorentz_fwhm = std::exp(p(2));
    v.amplitude = p(3);
    v.c0 = p(4);
    v.c1 = p(5);
    v.pivot = pivot;
    return v;
  };
  const ResidualFn residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    const PseudoVoigt v = model(p);
    for (int k = 0; k < m; ++k) r(k) = v(x[k]) - y[k];
  };
  const LsqResult fit = least_squares(residual, m, p0);
  if (!fit.converged) {
    std::ostringstream msg;
    msg << raman_mode_name(label) << " fit did not converge (status " << fit.status
        << ", residual sum of squares " << fit.rss << ")";
    fail(ErrorCode::fit_failure, msg.str());
  }
  out.profile = model(fit.params);
  out.noise = std::sqrt(fit.rss / std::max(fit.dof, 1));
  const Eigen::VectorXd s = fit.sigma();
  out.sigma_center = s(0);
  out.sigma_gauss = out.profile.gauss_fwhm * s(1);
  out.sigma_lorentz = out.profile.lorentz_fwhm * s(2);
  out.sigma_amplitude = s(3);
  out.sigma_c0 = s(4);
  out.sigma_c1 = s(5);

  const double fwhm = out.profile.total_fwhm();
  std::ostringstream why;
  if (!(out.profile.amplitude > options.min_snr * out.noise)) {
    why << "amplitude " << out.profile.amplitude << " below " << options.min_snr << " x noise "
        << out.noise;
  } else if (out.profile.center < lo || out.profile.center > hi) {
    why << "fitted center " << out.profile.center << " outside the window";
  } else if (fwhm < 2.0 * step || fwhm > hi - lo) {
    why << "fitted width " << fwhm << " cm^-1 is not resolved inside the window";
  }
  if (!why.str().empty()) {
    fail(ErrorCode::no_peak, std::string(raman_mode_name(label)) + ": " + why.str());
  }
  return out;
}

Shift shifts_from_reference(const PeakFit& fit, const PeakFit& reference) {
  if (fit.label != reference.label) {
    fail(ErrorCode::label_mismatch, std::string("cannot reference ") +
                                        std::string(raman_mode_name(fit.label)) + " against " +
                                        std::string(raman_mode_name(reference.label)));
  }
  return {fit.center() - reference.center(), std::hypot(fit.sigma_center, reference.sigma_center)};
}

Eigen::Matrix<double, 3, 2> DeformationPotentials::matrix() const {
  Eigen::Matrix<double, 3, 2> m;
  m << 2.0 * a_e1, b_e1, 2.0 * a_e2, b_e2, 2.0 * a_a1, b_a1;
  return m;
}

void StiffnessConstants::validate() const {
  if (!(c11 > 0 && c12 > 0 && c13 > 0 && c33 > 0)) {
    fail(ErrorCode::invalid_argument, "stiffness constants must be positive");
  }
  if (c11 * c33 + c12 * c33 - c13 * c13 == 0.0 || 2.0 * c13 * c13 - c33 * (c11 + c12) == 0.0) {
    fail(ErrorCode::invalid_argument, "stiffness constants make the strain relations singular");
  }
}

ShiftTriple forward_shifts(const StressState& stress, const DeformationPotentials& p) {
  ShiftTriple t;
  t.value = p.matrix() * Eigen::Vector2d(stress.perp, stress.para);
  return t;
}

StressSolution shifts_to_stress(const ShiftTriple& shifts, const DeformationPotentials& p) {
  const Eigen::Matrix<double, 3, 2> m = p.matrix();
  std::vector<std::array<int, 2>> pairs = {{0, 1}};
  if (shifts.has_a1) pairs = {{0, 1}, {0, 2}, {1, 2}};
  StressSolution out;
  out.two_peak = !shifts.has_a1;
  Eigen::Matrix<double, 2, 3> average = Eigen::Matrix<double, 2, 3>::Zero();
  for (const auto& [i, j] : pairs) {
    Eigen::Matrix2d a;
    a.row(0) = m.row(i);
    a.row(1) = m.row(j);
    const double scaled = a.determinant() / (a.row(0).norm() * a.row(1).norm());
    if (!(std::abs(scaled) >= 1e-12)) {
      fail(ErrorCode::degenerate_system, std::string("singular stress system for the pair ") +
                                             std::string(raman_mode_name(RamanMode(i))) + "/" +
                                             std::string(raman_mode_name(RamanMode(j))));
    }
    const Eigen::Matrix2d inv = a.inverse();
    out.pairwise.push_back(inv * Eigen::Vector2d(shifts.value(i), shifts.value(j)));
    average.col(i) += inv.col(0);
    average.col(j) += inv.col(1);
  }
  const double n = static_cast<double>(pairs.size());
  average /= n;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& s : out.pairwise) mean += s / n;
  const Eigen::Matrix2d cov = average * shifts.sigma.cwiseAbs2().asDiagonal() * average.transpose();
  out.propagated = cov.diagonal().cwiseSqrt();
  if (pairs.size() > 1) {
    Eigen::Vector2d var = Eigen::Vector2d::Zero();
    for (const auto& s : out.pairwise) var += (s - mean).cwiseAbs2() / (n - 1.0);
    out.spread = var.cwiseSqrt();
  }
  out.stress.perp = mean(0);
  out.stress.para = mean(1);
  out.stress.sigma_perp = std::max(out.propagated(0), out.spread(0));
  out.stress.sigma_para = std::max(out.propagated(1), out.spread(1));
  return out;
}

namespace {

// Rows (eps_perp, eps_para), columns (sigma_perp, sigma_para).
Eigen::Matrix2d compliance(const StiffnessConstants& c) {
  c.validate();
  const double d_perp = c.c11 * c.c33 + c.c12 * c.c33 - c.c13 * c.c13;
  const double d_para = 2.0 * c.c13 * c.c13 - c.c33 * (c.c11 + c.c12);
  Eigen::Matrix2d k;
  k << c.c33 / d_perp, -c.c13 / d_perp, 2.0 * c.c13 / d_para, -(c.c11 + c.c12) / d_para;
  return k;
}

}  // namespace

StrainState stress_to_strain(const StressState& stress, const StiffnessConstants& c) {
  const Eigen::Matrix2d k = compliance(c);
  const Eigen::Vector2d e = k * Eigen::Vector2d(stress.perp, stress.para);
  const Eigen::Vector2d var =
      k.cwiseAbs2() * Eigen::Vector2d(stress.sigma_perp * stress.sigma_perp,
                                      stress.sigma_para * stress.sigma_para);
  return {e(1), e(0), std::sqrt(var(1)), std::sqrt(var(0))};
}

StressState strain_to_stress(const StrainState& strain, const StiffnessConstants& c) {
  const Eigen::Matrix2d k = compliance(c).inverse();
  const Eigen::Vector2d s = k * Eigen::Vector2d(strain.perp, strain.para);
  const Eigen::Vector2d var =
      k.cwiseAbs2() * Eigen::Vector2d(strain.sigma_perp * strain.sigma_perp,
                                      strain.sigma_para * strain.sigma_para);
  return {s(1), s(0), std::sqrt(var(1)), std::sqrt(var(0))};
}

A1Constants derive_a1_constants(const std::vector<ShiftTriple>& datasets,
                                const DeformationPotentials& p) {
  if (datasets.size() < 2) {
    fail(ErrorCode::rank_deficient, "at least two datasets are needed to fit (a_A1, b_A1)");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(datasets.size());
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    ShiftTriple pair = datasets[k];
    pair.has_a1 = false;
    const StressState s = shifts_to_stress(pair, p).stress;
    x(k, 0) = 2.0 * s.perp;
    x(k, 1) = s.para;
    y(k) = datasets[k].value(2);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < 2) {
    fail(ErrorCode::rank_deficient, "implied stress states are collinear; (a_A1, b_A1) not identifiable");
  }
  const Eigen::Vector2d ab = qr.solve(y);
  A1Constants out;
  out.a = ab(0);
  out.b = ab(1);
  const Eigen::VectorXd r = x * ab - y;
  out.residual_rms = std::sqrt(r.squaredNorm() / n);
  if (n > 2) {
    const Eigen::Matrix2d cov = (r.squaredNorm() / (n - 2)) * (x.transpose() * x).inverse();
    out.sigma_a = std::sqrt(cov(0, 0));
    out.sigma_b = std::sqrt(cov(1, 1));
  }
  return out;
}

StrainMap build_strain_map(const std::vector<RamanSpectrum>& spectra,
                           const RamanSpectrum& reference, const StrainMapOptions& options) {
  std::vector<RamanMode> modes = {RamanMode::e1_to, RamanMode::e2_to};
  if (options.use_a1) modes.push_back(RamanMode::a1_lo);
  std::vector<PeakFit> ref;
  for (RamanMode m : modes) {
    const auto w = default_window(m);
    try {
      ref.push_back(fit_peak(reference, w[0], w[1], m, options.fit));
    } catch (const Error& e) {
      fail(ErrorCode::reference_failure, std::string("reference spectrum: ") + e.what());
    }
  }

  auto key = [](double v) { return std::llround(v * 1e6); };  // 1e-6 um resolution
  std::map<long long, double> xs, ys;
  for (const auto& s : spectra) {
    if (!s.position) fail(ErrorCode::invalid_argument, "map spectra need a position");
    xs[key(s.position->x())] = s.position->x();
    ys[key(s.position->y())] = s.position->y();
  }
  StrainMap map;
  std::map<long long, int> col, row;
  for (const auto& [k, v] : xs) {
    col[k] = static_cast<int>(map.x.size());
    map.x.push_back(v);
  }
  for (const auto& [k, v] : ys) {
    row[k] = static_cast<int>(map.y.size());
    map.y.push_back(v);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const Eigen::Index ny = static_cast<Eigen::Index>(map.y.size());
  const Eigen::Index nx = static_cast<Eigen::Index>(map.x.size());
  for (Eigen::MatrixXd* m : {&map.eps_para, &map.eps_perp, &map.sigma_eps_para,
                             &map.sigma_eps_perp, &map.stress_para, &map.stress_perp}) {
    *m = Eigen::MatrixXd::Constant(ny, nx, nan);
  }
  Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(ny, nx);
  for (const auto& s : spectra) {
    int& hit = seen(row[key(s.position->y())], col[key(s.position->x())]);
    if (hit++) fail(ErrorCode::invalid_argument, "two spectra share one scan position");
  }

  std::vector<std::optional<std::pair<StressState, StrainState>>> results(spectra.size());
  parallel_for(spectra.size(), options.workers, [&](std::size_t k) {
    try {
      ShiftTriple t;
      t.has_a1 = options.use_a1;
      for (std::size_t m = 0; m < modes.size(); ++m) {
        const auto w = default_window(modes[m]);
        const Shift sh = shifts_from_reference(fit_peak(spectra[k], w[0], w[1], modes[m], options.fit), ref[m]);
        t.value(static_cast<Eigen::Index>(m)) = sh.value;
        t.sigma(static_cast<Eigen::Index>(m)) = sh.sigma;
      }
      const StressState stress = shifts_to_stress(t, options.potentials).stress;
      results[k] = std::make_pair(stress, stress_to_strain(stress, options.stiffness));
    } catch (const Error&) {
      results[k].reset();
    }
  });
  for (std::size_t k = 0; k < spectra.size(); ++k) {
    if (!results[k]) {
      ++map.failed;
      continue;
    }
    const int r = row[key(spectra[k].position->y())];
    const int c = col[key(spectra[k].position->x())];
    const auto& [stress, strain] = *results[k];
    map.stress_para(r, c) = stress.para;
    map.stress_perp(r, c) = stress.perp;
    map.eps_para(r, c) = strain.para;
    map.eps_perp(r, c) = strain.perp;
    map.sigma_eps_para(r, c) = strain.sigma_para;
    map.sigma_eps_perp(r, c) = strain.sigma_perp;
  }
  return map;
}

}  // namespace sicwfi
