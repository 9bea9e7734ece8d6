#pragma once

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace sicwfi {

enum class RamanMode { e1_to, e2_to, a1_lo };

std::string_view raman_mode_name(RamanMode m);  // "E1(TO)", "E2(TO)", "A1(LO)"
RamanMode parse_raman_mode(std::string_view name);

/// Default fit window (cm^-1) around each 4H-SiC phonon line.
std::array<double, 2> default_window(RamanMode m);

struct RamanSpectrum {
  std::vector<double> wavenumber;  // cm^-1, strictly increasing
  std::vector<double> counts;      // non-negative
  std::optional<Eigen::Vector2d> position;  // um

  void validate() const;
};

/// Pseudo-Voigt line on a linear baseline. Widths are full widths at half
/// maximum; the Gaussian/Lorentzian mix and the total width follow the
/// Thompson-Cox-Hastings approximation. `amplitude` is the peak height.
struct PseudoVoigt {
  double center = 0.0;
  double gauss_fwhm = 1.0;
  double lorentz_fwhm = 1.0;
  double amplitude = 0.0;
  double c0 = 0.0;  // baseline at `pivot`
  double c1 = 0.0;  // baseline slope
  double pivot = 0.0;

  double total_fwhm() const;
  double eta() const;  // Lorentzian fraction
  double operator()(double nu) const;
};

struct CosmicFilterOptions {
  int median_window = 7;
  double threshold = 6.0;  // in robust standard deviations
  int max_run = 2;         // longer runs of outliers are treated as real features
};

/// Mask of samples rejected as cosmic-ray spikes: positive deviations from a
/// rolling median beyond threshold * max(1.4826 MAD, sqrt(median)), in runs
/// no longer than max_run.
std::vector<bool> cosmic_mask(const std::vector<double>& counts,
                              const CosmicFilterOptions& options = {});

struct PeakFitOptions {
  CosmicFilterOptions cosmic{};
  bool reject_cosmics = true;
  double min_snr = 3.0;  // amplitude over residual noise
};

struct PeakFit {
  RamanMode label = RamanMode::e2_to;
  PseudoVoigt profile;
  double sigma_center = 0.0;
  double sigma_gauss = 0.0;
  double sigma_lorentz = 0.0;
  double sigma_amplitude = 0.0;
  double sigma_c0 = 0.0;
  double sigma_c1 = 0.0;
  double noise = 0.0;  // residual RMS
  int used_points = 0;
  int rejected_points = 0;

  double center() const { return profile.center; }
};

/// Pseudo-Voigt plus linear baseline fit inside [lo, hi] (cm^-1).
PeakFit fit_peak(const RamanSpectrum& spectrum, double lo, double hi, RamanMode label,
                 const PeakFitOptions& options = {});

struct Shift {
  double value = 0.0;  // cm^-1
  double sigma = 0.0;
};

/// nu_sample - nu_reference with uncertainties added in quadrature.
Shift shifts_from_reference(const PeakFit& fit, const PeakFit& reference);

struct DeformationPotentials {
  double a_e1 = -2.06, b_e1 = -0.43;  // cm^-1/GPa
  double a_e2 = -1.55, b_e2 = -0.74;
  double a_a1 = -1.124, b_a1 = -0.651;

  /// Rows E1, E2, A1; columns (sigma_perp, sigma_para): [2a, b].
  Eigen::Matrix<double, 3, 2> matrix() const;
};

struct StiffnessConstants {
  double c11 = 501.0, c12 = 111.0, c13 = 52.0, c33 = 553.0;  // GPa

  void validate() const;
};

struct StressState {
  double para = 0.0, perp = 0.0;  // GPa
  double sigma_para = 0.0, sigma_perp = 0.0;
};

struct StrainState {
  double para = 0.0, perp = 0.0;
  double sigma_para = 0.0, sigma_perp = 0.0;
};

/// Shifts of E1(TO), E2(TO), A1(LO) in cm^-1 with uncertainties.
struct ShiftTriple {
  Eigen::Vector3d value = Eigen::Vector3d::Zero();
  Eigen::Vector3d sigma = Eigen::Vector3d::Zero();
  bool has_a1 = true;
};

ShiftTriple forward_shifts(const StressState& stress, const DeformationPotentials& p = {});

struct StressSolution {
  StressState stress;  // average of the pairwise solutions
  std::vector<Eigen::Vector2d> pairwise;  // (perp, para) for (E1,E2), (E1,A1), (E2,A1)
  Eigen::Vector2d propagated = Eigen::Vector2d::Zero();  // (perp, para)
  Eigen::Vector2d spread = Eigen::Vector2d::Zero();
  bool two_peak = false;  // only the E1/E2 pair was available
};

/// Solves the pairwise 2x2 systems and averages them. The reported
/// uncertainty per component is max(propagated, spread of the solutions).
StressSolution shifts_to_stress(const ShiftTriple& shifts, const DeformationPotentials& p = {});

/// Stress to strain with the closed-form hexagonal relations
///   eps_perp = (C33 s_perp - C13 s_para) / (C11 C33 + C12 C33 - C13^2)
///   eps_para = (2 C13 s_perp - (C11 + C12) s_para) / (2 C13^2 - C33 (C11 + C12))
StrainState stress_to_strain(const StressState& stress, const StiffnessConstants& c = {});

/// Exact linear inverse of stress_to_strain.
StressState strain_to_stress(const StrainState& strain, const StiffnessConstants& c = {});

struct A1Constants {
  double a = 0.0, b = 0.0;  // cm^-1/GPa
  double sigma_a = 0.0, sigma_b = 0.0;
  double residual_rms = 0.0;
};

/// Stress from the E1/E2 pair of every dataset, then a least-squares fit of
/// the A1 shifts to 2 a sigma_perp + b sigma_para.
A1Constants derive_a1_constants(const std::vector<ShiftTriple>& datasets,
                                const DeformationPotentials& p = {});

struct StrainMapOptions {
  PeakFitOptions fit{};
  DeformationPotentials potentials{};
  StiffnessConstants stiffness{};
  bool use_a1 = true;
  int workers = 1;
};

/// Strain and stress on the rectilinear scan grid spanned by the spectrum
/// positions. Cells without a spectrum or with a failed fit hold NaN.
struct StrainMap {
  std::vector<double> x, y;  // um, ascending unique coordinates
  Eigen::MatrixXd eps_para, eps_perp, sigma_eps_para, sigma_eps_perp;  // rows y, cols x
  Eigen::MatrixXd stress_para, stress_perp;
  int failed = 0;
};

StrainMap build_strain_map(const std::vector<RamanSpectrum>& spectra,
                           const RamanSpectrum& reference, const StrainMapOptions& options = {});

}  // namespace sicwfi
