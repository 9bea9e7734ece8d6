#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "sicwfi/curve.hpp"
#include "sicwfi/eigs.hpp"
#include "sicwfi/geometry.hpp"

namespace sicwfi {

/// Field model of the transverse operator. The semi-vectorial variants keep
/// the permittivity-jump condition for the dominant field component:
/// quasi_te carries E_x (jumps across vertical walls), quasi_tm carries E_y
/// (jumps across horizontal faces). `scalar` is the plain Helmholtz operator
/// and is the only symmetric one.
enum class Polarization { scalar, quasi_te, quasi_tm };

std::string_view polarization_name(Polarization p);
Polarization parse_polarization(std::string_view name);

struct ModeSolverOptions {
  Polarization polarization = Polarization::quasi_tm;
  double boundary_floor = 0.02;  // max |E| on the outer ring relative to peak
  // The grid's left edge is a mirror plane and only modes even in x are
  // sought (the grid must then start half a cell right of the plane).
  bool mirror_x = false;
  EigsOptions eigs{};
};

/// Guided eigenmode of a DielectricGrid. The field holds the dominant
/// transverse component, real valued, normalized so that
/// sum |E|^2 * cell_area == 1 (unit power in the weak-guidance sense), with
/// the largest-magnitude sample positive.
struct GuidedMode {
  double n_eff = 0.0;
  double wavelength = 0.0;
  Polarization polarization = Polarization::scalar;
  GridSpec grid{};
  Eigen::VectorXd field;
  double boundary_ratio = 0.0;
  bool decayed = true;  // false: field did not decay below the floor at the domain edge

  double beta() const;  // propagation constant, 1/m
  double at(int i, int j) const { return field(grid.index(i, j)); }
};

/// Finite-difference transverse operator whose eigenvalues are beta^2.
/// With `mirror_x` the field is continued evenly across the left grid edge.
Eigen::SparseMatrix<double> transverse_operator(const DielectricGrid& grid, double wavelength,
                                                Polarization polarization, bool mirror_x = false);

/// Up to `count` guided modes with sqrt(min eps) < n_eff < sqrt(max eps),
/// sorted by descending n_eff. An empty list means nothing is guided.
std::vector<GuidedMode> solve_modes(const DielectricGrid& grid, double wavelength, int count,
                                    const ModeSolverOptions& options = {},
                                    const Eigen::MatrixXd& warm_start = Eigen::MatrixXd());

/// Discrete overlap sum a*b*dA of two modes on the same grid.
double overlap(const GuidedMode& a, const GuidedMode& b);

struct ModeCountOptions {
  double spacing = 10e-9;
  double margin = -1.0;  // < 0: one wavelength
  int requested = 6;
  double merge_tolerance = 1e-4;  // |delta n_eff| below this is one family
  ModeSolverOptions solver{};
};

/// Number of distinct guided mode families (decayed at the boundary, merged
/// within `merge_tolerance` in n_eff).
int count_guided_modes(const CrossSectionGeometry& geometry, double wavelength,
                       const ModeCountOptions& options = {});

struct CouplingMapOptions {
  double spacing = 10e-9;
  double margin = -1.0;  // < 0: one wavelength
  ModeSolverOptions solver{};
};

/// Per-direction emission into the fundamental mode relative to the
/// homogeneous-medium rate in the core material, for a point dipole at each
/// grid cell.
struct CouplingMap {
  GridSpec grid{};
  Eigen::ArrayXd beta;
  Eigen::Array<bool, Eigen::Dynamic, 1> in_core;
  double n_eff = 0.0;  // of the dominant contributing fundamental mode
  int argmax_i = 0;    // maximum over core cells
  int argmax_j = 0;

  double at(int i, int j) const { return beta(grid.index(i, j)); }
  double max_value() const { return at(argmax_i, argmax_j); }
  /// Bilinear interpolation at (x, y); zero outside the grid.
  double sample(double x, double y) const;
};

/// Coupling map for a dipole oriented along (orientation_x, orientation_y)
/// in the cross-section plane; the default is perpendicular to the top face.
CouplingMap dipole_coupling_map(const CrossSectionGeometry& geometry, double wavelength,
                                const Eigen::Vector2d& orientation = Eigen::Vector2d(0.0, 1.0),
                                const CouplingMapOptions& options = {});

/// Pointwise convex combination of curves sharing one x axis.
Curve weighted_transmission(const std::vector<Curve>& curves, const std::vector<double>& weights);

}  // namespace sicwfi
