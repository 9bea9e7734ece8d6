#pragma once

#include <complex>
#include <vector>

#include <Eigen/Core>

#include "sicwfi/curve.hpp"

namespace sicwfi {

template <typename Scalar>
using SpinMatrix = Eigen::Matrix<std::complex<Scalar>, 4, 4>;

/// Spin-3/2 operators (hbar = 1) in the basis m = +3/2, +1/2, -1/2, -3/2.
template <typename Scalar = double>
struct SpinOperators {
  SpinMatrix<Scalar> x, y, z, identity;

  const SpinMatrix<Scalar>& operator[](int axis) const {
    return axis == 0 ? x : (axis == 1 ? y : z);
  }
};

template <typename Scalar = double>
SpinOperators<Scalar> spin_three_halves() {
  using C = std::complex<Scalar>;
  SpinMatrix<Scalar> raise = SpinMatrix<Scalar>::Zero();
  // <m+1|S+|m> = sqrt(s(s+1) - m(m+1)) for s = 3/2.
  raise(0, 1) = C(std::sqrt(Scalar(3)));
  raise(1, 2) = C(Scalar(2));
  raise(2, 3) = C(std::sqrt(Scalar(3)));
  const SpinMatrix<Scalar> lower = raise.adjoint();
  SpinOperators<Scalar> s;
  s.x = (raise + lower) * C(Scalar(0.5));
  s.y = (raise - lower) * C(Scalar(0), Scalar(-0.5));
  s.z = SpinMatrix<Scalar>::Zero();
  s.z.diagonal() << C(1.5), C(0.5), C(-0.5), C(-1.5);
  s.identity = SpinMatrix<Scalar>::Identity();
  return s;
}

/// Symmetric strain tensor, z along the crystal c-axis.
using DeformationTensor = Eigen::Matrix3d;

struct GroundStateParams {
  double zfs = 35e6;             // D, Hz (2D = 70 MHz)
  double xi_para = 2.8e9;        // Hz per unit strain
  double xi_perp = -1.9e9;       // Hz per unit strain
  double gyromagnetic = 2.8e10;  // Hz/T
  double stark = 13.0;           // ODMR shift per field, Hz per V/cm

  /// Coupling constant for the (alpha, beta) strain component.
  double xi(int alpha, int beta) const {
    return alpha == 2 && beta == 2 ? xi_para : xi_perp;
  }
};

struct SpinSystem {
  SpinMatrix<double> hamiltonian;  // Hz
  GroundStateParams params;
  DeformationTensor strain = DeformationTensor::Zero();
  Eigen::Vector3d field = Eigen::Vector3d::Zero();  // T
};

/// Throws ErrorCode::invalid_tensor when u is not symmetric or leaves the
/// linear regime (|u| >= 0.05).
void validate_strain(const DeformationTensor& u);

/// Strain part of the Hamiltonian, sum over alpha, beta of
/// Xi_ab u_ab (S_a S_b + S_b S_a) / 2.
SpinMatrix<double> strain_term(const GroundStateParams& params, const DeformationTensor& u);

/// H = D (Sz^2 - 5/4) + strain term + gamma_e B.S, in Hz.
SpinSystem build_hamiltonian(const GroundStateParams& params, const DeformationTensor& u,
                             const Eigen::Vector3d& field = Eigen::Vector3d::Zero());

struct SpinTransition {
  double frequency = 0.0;  // Hz
  int lower = 0;           // level indices into SpinSpectrum::energies
  int upper = 0;
  double strength = 0.0;  // |<upper|S_x|lower>|^2 + |<upper|S_y|lower>|^2
  bool ambiguous = false;
};

struct SpinSpectrum {
  Eigen::Vector4d energies;           // ascending, Hz
  SpinMatrix<double> states;          // columns are eigenvectors
  Eigen::Vector4d outer_weight;       // weight on |+-3/2> per level
  std::vector<SpinTransition> transitions;  // between the two manifolds
  bool ambiguous = false;             // some level is mixed beyond the threshold

  /// Distinct transition frequencies (merged within `tolerance` Hz), ascending.
  std::vector<double> frequencies(double tolerance = 1e-3) const;
};

/// Eigen-decomposition and inter-manifold transitions. A level belongs to the
/// |+-3/2> manifold when its weight there exceeds 1/2; it is flagged when
/// the minority weight exceeds `mixing_threshold`.
SpinSpectrum odmr_spectrum(const SpinSystem& system, double mixing_threshold = 0.45);

/// Convenience: distinct ODMR frequencies of `system`.
std::vector<double> odmr_frequencies(const SpinSystem& system);

struct StrainShift {
  double numeric = 0.0;      // signed splitting change from diagonalization, Hz
  double closed_form = 0.0;  // 2 (Xi_para eps_para - Xi_perp eps_perp), Hz
};

/// ODMR shift from 2D for u = diag(eps_perp, eps_perp, eps_para). The shift
/// is signed; the observable line sits at |2D + shift|.
StrainShift strain_shift(const GroundStateParams& params, double eps_para, double eps_perp);

/// ODMR shift for an electric field (V/cm) along the c-axis: k_E * E.
double stark_shift(const GroundStateParams& params, double field_v_per_cm);

struct StrainRow {
  double position = 0.0;  // m
  double eps_para = 0.0;
  double eps_perp = 0.0;
};

/// ODMR frequency along a strain profile, linearly interpolated between rows
/// (rows must be sorted by position) and held constant beyond the ends.
Curve odmr_vs_position(const std::vector<StrainRow>& table, const GroundStateParams& params,
                       const std::vector<double>& positions);

/// ODMR frequency at every table row.
Curve odmr_vs_position(const std::vector<StrainRow>& table, const GroundStateParams& params);

}  // namespace sicwfi
