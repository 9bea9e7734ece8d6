#include "sicwfi/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sicwfi/constants.hpp"
#include "sicwfi/error.hpp"

namespace sicwfi {

IndexTable::IndexTable(std::vector<std::pair<double, double>> points)
    : points_(std::move(points)) {
  if (points_.empty()) fail(ErrorCode::invalid_argument, "index table is empty");
  std::sort(points_.begin(), points_.end());
  for (std::size_t k = 1; k < points_.size(); ++k) {
    if (points_[k].first == points_[k - 1].first) {
      fail(ErrorCode::invalid_argument, "index table has duplicate wavelengths");
    }
  }
}

IndexTable IndexTable::constant(double index) { return IndexTable({{1e-6, index}}); }

IndexTable IndexTable::sic_4h() {
  return IndexTable({{900e-9, 2.594}, {960e-9, 2.589}, {1000e-9, 2.586}, {1063e-9, 2.583}});
}

double IndexTable::at(double wavelength) const {
  if (points_.empty()) fail(ErrorCode::invalid_argument, "index table is empty");
  if (wavelength <= points_.front().first) return points_.front().second;
  if (wavelength >= points_.back().first) return points_.back().second;
  auto hi = std::lower_bound(points_.begin(), points_.end(), wavelength,
                             [](const auto& p, double w) { return p.first < w; });
  auto lo = std::prev(hi);
  const double t = (wavelength - lo->first) / (hi->first - lo->first);
  return lo->second + t * (hi->second - lo->second);
}

double IndexTable::max() const {
  double m = 0.0;
  for (const auto& p : points_) m = std::max(m, p.second);
  return m;
}

double CrossSectionGeometry::height() const {
  return width / (2.0 * std::tan(deg_to_rad(apex_half_angle_deg)));
}

void CrossSectionGeometry::validate(double wavelength) const {
  std::ostringstream msg;
  if (!(width > 0.0) || !std::isfinite(width)) {
    msg << "beam width must be positive, got " << width;
    fail(ErrorCode::invalid_geometry, msg.str());
  }
  if (!(apex_half_angle_deg > 0.0 && apex_half_angle_deg < 90.0)) {
    msg << "apex half-angle must lie in (0, 90) degrees, got " << apex_half_angle_deg;
    fail(ErrorCode::invalid_geometry, msg.str());
  }
  if (!(clad_index >= 1.0)) {
    msg << "cladding index must be >= 1, got " << clad_index;
    fail(ErrorCode::invalid_geometry, msg.str());
  }
  if (!(core_index.at(wavelength) > clad_index)) {
    msg << "core index " << core_index.at(wavelength) << " does not exceed cladding index "
        << clad_index;
    fail(ErrorCode::invalid_geometry, msg.str());
  }
}

double CompositeSection::beam_height() const {
  if (!has_beam()) return 0.0;
  return width / (2.0 * std::tan(deg_to_rad(apex_half_angle_deg)));
}

double CompositeSection::max_index() const {
  double n = clad_index;
  if (has_beam()) n = std::max(n, core_index);
  if (has_fiber()) n = std::max(n, fiber.index);
  return n;
}

GridSpec GridSpec::covering(double xmin, double xmax, double ymin, double ymax,
                            double spacing) {
  if (!(spacing > 0.0)) fail(ErrorCode::invalid_argument, "grid spacing must be positive");
  GridSpec g;
  g.dx = spacing;
  g.dy = spacing;
  g.nx = std::max(1, static_cast<int>(std::ceil((xmax - xmin) / spacing)));
  g.ny = std::max(1, static_cast<int>(std::ceil((ymax - ymin) / spacing)));
  const double xc = 0.5 * (xmin + xmax);
  const double yc = 0.5 * (ymin + ymax);
  g.x0 = xc - 0.5 * (g.nx - 1) * spacing;
  g.y0 = yc - 0.5 * (g.ny - 1) * spacing;
  return g;
}

DielectricGrid DielectricGrid::from_function(const GridSpec& spec,
                                             const std::function<double(double, double)>& eps_at) {
  DielectricGrid grid{spec, Eigen::ArrayXd(spec.size())};
  for (int j = 0; j < spec.ny; ++j) {
    for (int i = 0; i < spec.nx; ++i) grid.eps(spec.index(i, j)) = eps_at(spec.x(i), spec.y(j));
  }
  return grid;
}

namespace {

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double t = std::clamp(((px - ax) * vx + (py - ay) * vy) / (vx * vx + vy * vy), 0.0, 1.0);
  return std::hypot(px - (ax + t * vx), py - (ay + t * vy));
}

}  // namespace

double Triangle::signed_distance(double x, double y) const {
  // Vertices: (-w/2, 0), (w/2, 0), (0, -h).
  const double d = std::min({segment_distance(x, y, -half_width, 0.0, half_width, 0.0),
                             segment_distance(x, y, half_width, 0.0, 0.0, -height),
                             segment_distance(x, y, 0.0, -height, -half_width, 0.0)});
  const bool inside = y < 0.0 && y > -height && std::abs(x) < half_width * (1.0 + y / height);
  return inside ? -d : d;
}

double Disk::signed_distance(double x, double y) const {
  return std::hypot(x - cx, y - cy) - radius;
}

DielectricGrid rasterize_composite(const CompositeSection& section, const GridSpec& spec) {
  if (section.clad_index < 1.0) fail(ErrorCode::invalid_geometry, "cladding index below 1");
  const double eps_clad = section.clad_index * section.clad_index;
  DielectricGrid grid{spec, Eigen::ArrayXd::Constant(spec.size(), eps_clad)};
  const Triangle tri{0.5 * section.width, section.beam_height()};
  const Disk disk{0.0, section.fiber.center_y(), section.fiber.radius};
  const double eps_core = section.core_index * section.core_index;
  const double eps_fiber = section.fiber.index * section.fiber.index;
  for (int j = 0; j < spec.ny; ++j) {
    for (int i = 0; i < spec.nx; ++i) {
      const double x = spec.x(i), y = spec.y(j);
      double eps = eps_clad;
      if (section.has_beam()) {
        const double f = cell_fill_fraction(tri, x, y, spec.dx, spec.dy);
        eps += f * (eps_core - eps_clad);
      }
      if (section.has_fiber()) {
        const double f = cell_fill_fraction(disk, x, y, spec.dx, spec.dy);
        eps += f * (eps_fiber - eps_clad);
      }
      grid.eps(spec.index(i, j)) = eps;
    }
  }
  return grid;
}

GridSpec grid_for_composite(const CompositeSection& section, double spacing, double margin) {
  if (!(margin >= 0.0)) fail(ErrorCode::invalid_argument, "grid margin must be non-negative");
  double half_x = 0.0, ymin = 0.0, ymax = 0.0;
  if (section.has_beam()) {
    half_x = 0.5 * section.width;
    ymin = -section.beam_height();
  }
  if (section.has_fiber()) {
    half_x = std::max(half_x, section.fiber.radius);
    ymax = section.fiber.center_y() + section.fiber.radius;
  }
  return GridSpec::covering(-half_x - margin, half_x + margin, ymin - margin, ymax + margin,
                            spacing);
}

DielectricGrid rasterize_cross_section(const CrossSectionGeometry& geometry, double wavelength,
                                       double spacing, double margin) {
  geometry.validate(wavelength);
  if (!(spacing > 0.0)) fail(ErrorCode::invalid_argument, "grid spacing must be positive");
  if (!(margin >= 0.0)) fail(ErrorCode::invalid_argument, "grid margin must be non-negative");
  CompositeSection section;
  section.width = geometry.width;
  section.apex_half_angle_deg = geometry.apex_half_angle_deg;
  section.core_index = geometry.core_index.at(wavelength);
  section.clad_index = geometry.clad_index;
  return rasterize_composite(section, grid_for_composite(section, spacing, margin));
}

}  // namespace sicwfi
