#include "sicwfi/spin.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "sicwfi/error.hpp"

namespace sicwfi {

namespace {

const SpinOperators<double>& ops() {
  static const SpinOperators<double> s = spin_three_halves<double>();
  return s;
}

}  // namespace

void validate_strain(const DeformationTensor& u) {
  if (!u.allFinite()) fail(ErrorCode::invalid_tensor, "strain tensor has non-finite entries");
  const double scale = std::max(u.cwiseAbs().maxCoeff(), 1e-300);
  if ((u - u.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    fail(ErrorCode::invalid_tensor, "strain tensor is not symmetric");
  }
  if (u.cwiseAbs().maxCoeff() >= 0.05) {
    std::ostringstream msg;
    msg << "strain component " << u.cwiseAbs().maxCoeff() << " outside the linear regime (< 0.05)";
    fail(ErrorCode::invalid_tensor, msg.str());
  }
}

SpinMatrix<double> strain_term(const GroundStateParams& params, const DeformationTensor& u) {
  const auto& s = ops();
  SpinMatrix<double> h = SpinMatrix<double>::Zero();
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      const double c = params.xi(a, b) * u(a, b);
      if (c == 0.0) continue;
      h += (0.5 * c) * (s[a] * s[b] + s[b] * s[a]);
    }
  }
  return h;
}

SpinSystem build_hamiltonian(const GroundStateParams& params, const DeformationTensor& u,
                             const Eigen::Vector3d& field) {
  if (!(params.zfs > 0.0)) fail(ErrorCode::invalid_argument, "zero-field splitting D must be > 0");
  validate_strain(u);
  if (!field.allFinite()) fail(ErrorCode::invalid_argument, "magnetic field is not finite");
  const auto& s = ops();
  SpinSystem sys;
  sys.params = params;
  sys.strain = u;
  sys.field = field;
  sys.hamiltonian = params.zfs * (s.z * s.z - 1.25 * s.identity) + strain_term(params, u) +
                    params.gyromagnetic * (field.x() * s.x + field.y() * s.y + field.z() * s.z);
  return sys;
}

std::vector<double> SpinSpectrum::frequencies(double tolerance) const {
  std::vector<double> f;
  for (const auto& t : transitions) f.push_back(t.frequency);
  std::sort(f.begin(), f.end());
  std::vector<double> out;
  for (double v : f) {
    if (out.empty() || v - out.back() > tolerance) out.push_back(v);
  }
  return out;
}

SpinSpectrum odmr_spectrum(const SpinSystem& system, double mixing_threshold) {
  const auto& s = ops();
  Eigen::SelfAdjointEigenSolver<SpinMatrix<double>> es(system.hamiltonian);
  if (es.info() != Eigen::Success) fail(ErrorCode::invalid_argument, "spin diagonalization failed");
  SpinSpectrum out;
  out.energies = es.eigenvalues();
  out.states = es.eigenvectors();
  bool outer[4];
  for (int k = 0; k < 4; ++k) {
    const auto v = out.states.col(k);
    const double w = std::norm(v(0)) + std::norm(v(3));
    out.outer_weight(k) = w;
    outer[k] = w > 0.5;
    if (std::min(w, 1.0 - w) > mixing_threshold) out.ambiguous = true;
  }
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      if (outer[i] == outer[j]) continue;
      SpinTransition t;
      t.lower = i;
      t.upper = j;
      t.frequency = out.energies(j) - out.energies(i);
      const auto vi = out.states.col(i);
      const auto vj = out.states.col(j);
      t.strength = std::norm(vj.dot(s.x * vi)) + std::norm(vj.dot(s.y * vi));
      t.ambiguous = std::min(out.outer_weight(i), 1.0 - out.outer_weight(i)) > mixing_threshold ||
                    std::min(out.outer_weight(j), 1.0 - out.outer_weight(j)) > mixing_threshold;
      out.transitions.push_back(t);
    }
  }
  return out;
}

std::vector<double> odmr_frequencies(const SpinSystem& system) {
  return odmr_spectrum(system).frequencies();
}

StrainShift strain_shift(const GroundStateParams& params, double eps_para, double eps_perp) {
  DeformationTensor u = DeformationTensor::Zero();
  u.diagonal() << eps_perp, eps_perp, eps_para;
  const SpinSpectrum sp = odmr_spectrum(build_hamiltonian(params, u));
  // Diagonal strain keeps the Sz eigenbasis, so each level is a pure Kramers
  // pair. The splitting is signed (|+-3/2> minus |+-1/2>) so the shift stays
  // linear when strain inverts the level order.
  double outer = 0.0, inner = 0.0;
  for (int k = 0; k < 4; ++k) (sp.outer_weight(k) > 0.5 ? outer : inner) += 0.5 * sp.energies(k);
  StrainShift out;
  out.numeric = outer - inner - 2.0 * params.zfs;
  out.closed_form = 2.0 * (params.xi_para * eps_para - params.xi_perp * eps_perp);
  return out;
}

double stark_shift(const GroundStateParams& params, double field_v_per_cm) {
  if (!(field_v_per_cm >= 0.0)) fail(ErrorCode::invalid_argument, "electric field must be >= 0");
  return params.stark * field_v_per_cm;
}

Curve odmr_vs_position(const std::vector<StrainRow>& table, const GroundStateParams& params,
                       const std::vector<double>& positions) {
  if (table.empty()) fail(ErrorCode::empty_table, "strain table has no rows");
  for (std::size_t k = 1; k < table.size(); ++k) {
    if (!(table[k].position > table[k - 1].position)) {
      fail(ErrorCode::invalid_argument, "strain table positions must increase strictly");
    }
  }
  Curve c;
  c.x = positions;
  for (double x : positions) {
    StrainRow r = table.front();
    if (x >= table.back().position) {
      r = table.back();
    } else if (x > table.front().position) {
      auto hi = std::upper_bound(table.begin(), table.end(), x,
                                 [](double v, const StrainRow& row) { return v < row.position; });
      auto lo = std::prev(hi);
      const double t = (x - lo->position) / (hi->position - lo->position);
      r.eps_para = lo->eps_para + t * (hi->eps_para - lo->eps_para);
      r.eps_perp = lo->eps_perp + t * (hi->eps_perp - lo->eps_perp);
    }
    c.y.push_back(std::abs(2.0 * params.zfs + strain_shift(params, r.eps_para, r.eps_perp).numeric));
  }
  return c;
}

Curve odmr_vs_position(const std::vector<StrainRow>& table, const GroundStateParams& params) {
  std::vector<double> x;
  for (const auto& r : table) x.push_back(r.position);
  return odmr_vs_position(table, params, x);
}

}  // namespace sicwfi
