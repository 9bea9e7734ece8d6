#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace sicwfi {

/// Refractive index tabulated against vacuum wavelength (m), linearly
/// interpolated and clamped to the end points outside the table.
class IndexTable {
 public:
  IndexTable() = default;
  explicit IndexTable(std::vector<std::pair<double, double>> points);

  static IndexTable constant(double index);
  /// Ordinary index of 4H-SiC across the V2 emission band (900-1063 nm).
  static IndexTable sic_4h();

  double at(double wavelength) const;
  double max() const;
  const std::vector<std::pair<double, double>>& points() const { return points_; }

 private:
  std::vector<std::pair<double, double>> points_;
};

/// Free-standing triangular nanobeam: flat top face at y = 0, apex pointing
/// down at y = -height(), centered on x = 0.
struct CrossSectionGeometry {
  double width = 490e-9;              // m
  double apex_half_angle_deg = 36.0;  // half-opening angle at the apex
  IndexTable core_index = IndexTable::sic_4h();
  double clad_index = 1.0;

  double height() const;
  /// Throws ErrorCode::invalid_geometry when an invariant is violated.
  void validate(double wavelength) const;
};

/// Tapered silica fiber resting on the top face of the beam, axis parallel
/// to the beam axis. A zero radius means the fiber is absent.
struct FiberSection {
  double radius = 0.0;  // m
  double index = 1.45;
  double gap = 0.0;  // distance between the fiber surface and the top face, m

  double center_y() const { return gap + radius; }
};

/// Beam plus fiber cross-section used for supermode solves. A zero beam
/// width means the beam is absent.
struct CompositeSection {
  double width = 0.0;
  double apex_half_angle_deg = 36.0;
  double core_index = 2.6;
  double clad_index = 1.0;
  FiberSection fiber{};

  bool has_beam() const { return width > 0.0; }
  bool has_fiber() const { return fiber.radius > 0.0; }
  double beam_height() const;
  double max_index() const;
};

/// Uniform cell-centered rectilinear grid. Cell (i, j) sits at
/// (x0 + i*dx, y0 + j*dy); flat storage index is i + nx*j.
struct GridSpec {
  double dx = 0.0;
  double dy = 0.0;
  int nx = 0;
  int ny = 0;
  double x0 = 0.0;
  double y0 = 0.0;

  double x(int i) const { return x0 + i * dx; }
  double y(int j) const { return y0 + j * dy; }
  int size() const { return nx * ny; }
  int index(int i, int j) const { return i + nx * j; }
  double cell_area() const { return dx * dy; }

  /// Grid with spacing `spacing` covering [xmin, xmax] x [ymin, ymax],
  /// symmetric about the box center.
  static GridSpec covering(double xmin, double xmax, double ymin, double ymax,
                           double spacing);
};

/// Relative permittivity sampled on a GridSpec.
struct DielectricGrid {
  GridSpec spec;
  Eigen::ArrayXd eps;  // size spec.size(), every value >= 1

  double operator()(int i, int j) const { return eps(spec.index(i, j)); }
  double max_eps() const { return eps.maxCoeff(); }

  static DielectricGrid from_function(const GridSpec& spec,
                                      const std::function<double(double, double)>& eps_at);
};

/// Closed shape with a signed distance (negative inside).
struct Triangle {
  double half_width;
  double height;

  double signed_distance(double x, double y) const;
};

struct Disk {
  double cx;
  double cy;
  double radius;

  double signed_distance(double x, double y) const;
};

/// Area fraction of the cell centered at (x, y) covered by a shape, using
/// supersampling on cells the shape boundary passes through.
template <typename Shape>
double cell_fill_fraction(const Shape& shape, double x, double y, double dx, double dy,
                          int subsamples = 12) {
  const double half_diag = 0.5 * std::hypot(dx, dy);
  const double d = shape.signed_distance(x, y);
  if (d <= -half_diag) return 1.0;
  if (d >= half_diag) return 0.0;
  int inside = 0;
  for (int a = 0; a < subsamples; ++a) {
    const double sx = x + dx * ((a + 0.5) / subsamples - 0.5);
    for (int b = 0; b < subsamples; ++b) {
      const double sy = y + dy * ((b + 0.5) / subsamples - 0.5);
      if (shape.signed_distance(sx, sy) < 0.0) ++inside;
    }
  }
  return static_cast<double>(inside) / (subsamples * subsamples);
}

/// Default vacuum margin around a structure: one wavelength.
inline double default_margin(double wavelength) { return wavelength; }

/// Rasterize a beam cross-section with `spacing` cells and `margin` of
/// cladding on every side. Boundary cells get area-weighted permittivity.
DielectricGrid rasterize_cross_section(const CrossSectionGeometry& geometry, double wavelength,
                                       double spacing, double margin);

/// Rasterize a composite section onto an existing grid layout.
DielectricGrid rasterize_composite(const CompositeSection& section, const GridSpec& spec);

/// Grid large enough to hold `section` with `margin` of cladding.
GridSpec grid_for_composite(const CompositeSection& section, double spacing, double margin);

}  // namespace sicwfi
