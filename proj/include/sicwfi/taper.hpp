#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "sicwfi/geometry.hpp"
#include "sicwfi/mode_solver.hpp"

namespace sicwfi {

/// Tapered beam end overlapped by a tapered fiber tip. The coordinate z runs
/// from the beam end (z = 0, width 0) into the beam; the fiber lies on the
/// top face with its (possibly broken) tip at z = overlap and widens towards
/// z < 0.
struct TaperProfile {
  double waveguide_angle_deg = 2.0;  // full opening angle of the beam taper
  double fiber_angle_deg = 1.95;     // full opening angle of the fiber cone
  double fiber_index = 1.45;
  double tip_radius = 0.0;  // m, 0 = ideal cone tip
  double overlap = 15e-6;   // m
  double gap = 0.0;         // fiber surface to top face, m
  double wavelength = 960e-9;
  double max_width = 490e-9;  // beam width once the taper is complete
  double apex_half_angle_deg = 36.0;
  IndexTable core_index = IndexTable::sic_4h();
  double clad_index = 1.0;

  double width_at(double z) const;
  double fiber_radius_at(double z) const;
  CompositeSection section_at(double z, bool with_beam = true, bool with_fiber = true) const;
  /// Throws invalid_geometry on a violated invariant.
  void validate() const;
};

struct Segment {
  CompositeSection section;
  double length = 0.0;  // m
  double z_mid = 0.0;   // m, where the section was evaluated
};

/// Staircase of the overlap region ordered in the waveguide-to-fiber
/// direction: the first segment sits next to the fiber tip, the last one at
/// the beam end.
struct SegmentStack {
  TaperProfile profile;
  std::vector<Segment> segments;

  double total_length() const;
};

/// Default staircase resolution: four segments per wavelength of overlap.
int default_segment_count(const TaperProfile& profile);

SegmentStack build_segments(const TaperProfile& profile, int n_segments);

struct EmeOptions {
  int supermodes = 4;      // guided supermodes kept per segment
  double spacing = 20e-9;  // m
  double margin = -1.0;    // < 0: one wavelength
  // Keep only modes even about the symmetry plane x = 0. The structure is
  // mirror symmetric, so odd modes never couple to the even fundamental.
  bool even_only = true;
  EigsOptions eigs{};
};

/// Guided supermodes of a composite cross-section on `spec`, scalar field
/// model, descending n_eff.
std::vector<GuidedMode> local_supermodes(const CompositeSection& section, double wavelength,
                                         int count, const GridSpec& spec,
                                         bool even_only = false,
                                         const Eigen::MatrixXd& warm_start = Eigen::MatrixXd());

/// Grid shared by every section of a stack (half plane x > 0 when even_only).
GridSpec stack_grid(const SegmentStack& stack, const EmeOptions& options);

enum class Direction { waveguide_to_fiber, fiber_to_waveguide };

std::string_view direction_name(Direction d);

/// Modal description of a stack: port modes, per-segment propagation
/// constants and the overlap matrices between neighbouring sections.
/// Interface k couples section k to section k+1 where section 0 is the bare
/// waveguide port, sections 1..n are the segments and n+1 the bare fiber.
struct EmeSolution {
  std::vector<Eigen::VectorXd> betas;     // per segment, 1/m
  std::vector<double> lengths;            // per segment, m
  std::vector<Eigen::MatrixXd> interfaces;  // rows: modes of k, cols: modes of k+1
  std::vector<int> mode_counts;           // per section including both ports
  std::vector<std::string> warnings;
  double solve_seconds = 0.0;
};

EmeSolution solve_stack(const SegmentStack& stack, const EmeOptions& options = {});

struct TransferResult {
  Direction direction = Direction::waveguide_to_fiber;
  double transmission = 0.0;  // power in the target port's fundamental
  double guided_power = 0.0;  // total modal power at the exit port
  double lost_power = 0.0;    // projected out at interfaces
  std::vector<Eigen::VectorXd> populations;  // modal powers inside each segment, in travel order
  std::vector<std::string> warnings;
};

/// Unidirectional cascade: launch the fundamental of the entry port, project
/// at every interface, accumulate phase over every segment.
TransferResult propagate(const EmeSolution& solution, Direction direction);

TransferResult propagate_eme(const SegmentStack& stack, Direction direction,
                             const EmeOptions& options = {});

enum class SweepParameter { overlap, fiber_angle, tip_radius, wavelength, waveguide_angle };

std::string_view sweep_parameter_name(SweepParameter p);
SweepParameter parse_sweep_parameter(std::string_view name);

struct SweepOptions {
  EmeOptions eme{};
  int segments = 0;  // 0: default_segment_count per point
  Direction direction = Direction::waveguide_to_fiber;
  int workers = 1;
};

/// Transmission versus one profile parameter (angles in degrees, lengths in
/// m). Values must be positive and sorted ascending.
Curve sweep_transmission(const TaperProfile& base, SweepParameter parameter,
                         const std::vector<double>& values, const SweepOptions& options = {});

Curve efficiency_vs_overlap(const TaperProfile& base, const std::vector<double>& overlaps,
                            const SweepOptions& options = {});

/// Length of x over which the curve stays at or above `threshold` around its
/// maximum, with linear interpolation at the crossings; 0 when the maximum is
/// below the threshold.
double plateau_width(const Curve& curve, double threshold);

/// eta_WFI from eta_trans = eta_WFI^2 * eta_coupler * eta_wg.
double infer_interface_efficiency(double eta_trans, double eta_coupler, double eta_wg);

struct SupportLoss {
  double point = 0.0;        // unclamped estimate
  double loss = 0.0;         // max(point, 0)
  double sigma = 0.0;        // propagated standard uncertainty
  double upper_bound = 0.0;  // max(point + k sigma, 0)
};

/// Per-support multiplicative loss l from T_a / T_b = (1 - l)^(n_a - n_b),
/// with input standard deviations propagated to first order.
SupportLoss per_support_loss(double t_a, double sigma_a, int n_a, double t_b, double sigma_b,
                             int n_b, double k_sigma = 1.0);

struct AdiabaticityReport {
  bool adiabatic = false;
  double overlap_in_wavelengths = 0.0;
  double waveguide_rate = 0.0;  // width change per unit propagation length
  double fiber_rate = 0.0;      // diameter change per unit propagation length
  double threshold = 0.0;
};

AdiabaticityReport adiabaticity_check(const TaperProfile& profile, double rate_threshold = 0.1);

}  // namespace sicwfi
