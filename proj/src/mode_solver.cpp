#include "sicwfi/mode_solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "sicwfi/constants.hpp"
#include "sicwfi/error.hpp"

namespace sicwfi {

std::string_view polarization_name(Polarization p) {
  switch (p) {
    case Polarization::scalar: return "scalar";
    case Polarization::quasi_te: return "quasi-te";
    case Polarization::quasi_tm: return "quasi-tm";
  }
  return "scalar";
}

Polarization parse_polarization(std::string_view name) {
  if (name == "scalar") return Polarization::scalar;
  if (name == "quasi-te" || name == "te") return Polarization::quasi_te;
  if (name == "quasi-tm" || name == "tm") return Polarization::quasi_tm;
  fail(ErrorCode::invalid_argument, "unknown polarization '" + std::string(name) + "'");
}

double GuidedMode::beta() const { return 2.0 * kPi / wavelength * n_eff; }

namespace {

// One axis of the operator at node p with neighbours lo/hi (-1 when the
// neighbour lies outside the domain, where the field is zero). With
// `weighted`, discretizes d/ds[(1/eps) d/ds(eps E)], otherwise d2E/ds2.
void add_axis(std::vector<Eigen::Triplet<double>>& t, const Eigen::ArrayXd& eps, int p, int lo,
              int hi, double h, bool weighted) {
  const double inv_h2 = 1.0 / (h * h);
  if (!weighted) {
    t.emplace_back(p, p, -2.0 * inv_h2);
    if (lo >= 0) t.emplace_back(p, lo, inv_h2);
    if (hi >= 0) t.emplace_back(p, hi, inv_h2);
    return;
  }
  const double e = eps(p);
  const double e_lo = lo >= 0 ? eps(lo) : e;
  const double e_hi = hi >= 0 ? eps(hi) : e;
  const double half_lo = 0.5 * (e + e_lo);
  const double half_hi = 0.5 * (e + e_hi);
  t.emplace_back(p, p, -(e / half_lo + e / half_hi) * inv_h2);
  if (lo >= 0) t.emplace_back(p, lo, e_lo / half_lo * inv_h2);
  if (hi >= 0) t.emplace_back(p, hi, e_hi / half_hi * inv_h2);
}

}  // namespace

Eigen::SparseMatrix<double> transverse_operator(const DielectricGrid& grid, double wavelength,
                                                Polarization polarization, bool mirror_x) {
  const GridSpec& g = grid.spec;
  if (!(wavelength > 0.0)) fail(ErrorCode::invalid_argument, "wavelength must be positive");
  if (grid.eps.size() != g.size() || g.size() == 0) {
    fail(ErrorCode::invalid_argument, "dielectric grid storage does not match its grid size");
  }
  if ((grid.eps < 1.0).any()) fail(ErrorCode::invalid_argument, "permittivity below 1 in grid");
  const double k0 = 2.0 * kPi / wavelength;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(g.size()) * 5);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const int p = g.index(i, j);
      // The mirror image of cell 0 is cell 0 itself.
      const int left = i > 0 ? p - 1 : (mirror_x ? p : -1);
      add_axis(t, grid.eps, p, left, i + 1 < g.nx ? p + 1 : -1, g.dx,
               polarization == Polarization::quasi_te);
      add_axis(t, grid.eps, p, j > 0 ? p - g.nx : -1, j + 1 < g.ny ? p + g.nx : -1, g.dy,
               polarization == Polarization::quasi_tm);
      t.emplace_back(p, p, k0 * k0 * grid.eps(p));
    }
  }
  Eigen::SparseMatrix<double> a(g.size(), g.size());
  a.setFromTriplets(t.begin(), t.end());
  a.makeCompressed();
  return a;
}

namespace {

double boundary_ratio(const GridSpec& g, const Eigen::VectorXd& f, bool mirror_x) {
  const double peak = f.cwiseAbs().maxCoeff();
  double edge = 0.0;
  for (int i = 0; i < g.nx; ++i) {
    edge = std::max({edge, std::abs(f(g.index(i, 0))), std::abs(f(g.index(i, g.ny - 1)))});
  }
  for (int j = 0; j < g.ny; ++j) {
    if (!mirror_x) edge = std::max(edge, std::abs(f(g.index(0, j))));
    edge = std::max(edge, std::abs(f(g.index(g.nx - 1, j))));
  }
  return peak > 0.0 ? edge / peak : 1.0;
}

}  // namespace

std::vector<GuidedMode> solve_modes(const DielectricGrid& grid, double wavelength, int count,
                                    const ModeSolverOptions& options,
                                    const Eigen::MatrixXd& warm_start) {
  if (count < 1) fail(ErrorCode::invalid_argument, "requested mode count must be >= 1");
  const Eigen::SparseMatrix<double> a =
      transverse_operator(grid, wavelength, options.polarization, options.mirror_x);
  const double k0 = 2.0 * kPi / wavelength;
  const double eps_max = grid.max_eps();
  const double eps_min = grid.eps.minCoeff();
  EigsOptions eo = options.eigs;
  eo.symmetric = options.polarization == Polarization::scalar;
  // The upper bound of the guided spectrum; no guided beta^2 reaches it.
  const double shift = k0 * k0 * eps_max;
  eo.floor = std::max(eo.floor, k0 * k0 * eps_min);
  const EigsResult res = eigs_shift_invert(a, shift, count, eo, warm_start);

  std::vector<GuidedMode> modes;
  const double n_lo = std::sqrt(eps_min), n_hi = std::sqrt(eps_max);
  for (Eigen::Index c = 0; c < res.values.size(); ++c) {
    const double b2 = res.values(c);
    if (!(b2 > 0.0)) continue;
    const double n_eff = std::sqrt(b2) / k0;
    if (!(n_eff > n_lo && n_eff < n_hi)) continue;
    GuidedMode m;
    m.n_eff = n_eff;
    m.wavelength = wavelength;
    m.polarization = options.polarization;
    m.grid = grid.spec;
    m.field = res.vectors.col(c);
    Eigen::Index imax = 0;
    m.field.cwiseAbs().maxCoeff(&imax);
    if (m.field(imax) < 0.0) m.field = -m.field;
    m.field /= std::sqrt(m.field.squaredNorm() * grid.spec.cell_area());
    m.boundary_ratio = boundary_ratio(grid.spec, m.field, options.mirror_x);
    m.decayed = m.boundary_ratio < options.boundary_floor;
    modes.push_back(std::move(m));
  }
  std::sort(modes.begin(), modes.end(),
            [](const GuidedMode& p, const GuidedMode& q) { return p.n_eff > q.n_eff; });
  return modes;
}

double overlap(const GuidedMode& a, const GuidedMode& b) {
  if (a.field.size() != b.field.size()) {
    fail(ErrorCode::axis_mismatch, "overlap of modes on different grids");
  }
  return a.field.dot(b.field) * a.grid.cell_area();
}

int count_guided_modes(const CrossSectionGeometry& geometry, double wavelength,
                       const ModeCountOptions& options) {
  const double margin = options.margin < 0.0 ? default_margin(wavelength) : options.margin;
  const DielectricGrid grid =
      rasterize_cross_section(geometry, wavelength, options.spacing, margin);
  const auto modes = solve_modes(grid, wavelength, options.requested, options.solver);
  int families = 0;
  double last = -1.0;
  for (const auto& m : modes) {
    if (!m.decayed) continue;
    if (families == 0 || std::abs(last - m.n_eff) >= options.merge_tolerance) ++families;
    last = m.n_eff;
  }
  return families;
}

double CouplingMap::sample(double x, double y) const {
  const double fi = (x - grid.x0) / grid.dx;
  const double fj = (y - grid.y0) / grid.dy;
  if (fi < 0.0 || fj < 0.0 || fi > grid.nx - 1 || fj > grid.ny - 1) return 0.0;
  const int i = std::min(static_cast<int>(fi), grid.nx - 2 < 0 ? 0 : grid.nx - 2);
  const int j = std::min(static_cast<int>(fj), grid.ny - 2 < 0 ? 0 : grid.ny - 2);
  const double tx = fi - i, ty = fj - j;
  auto v = [&](int a, int b) {
    return beta(grid.index(std::min(a, grid.nx - 1), std::min(b, grid.ny - 1)));
  };
  return (1 - tx) * (1 - ty) * v(i, j) + tx * (1 - ty) * v(i + 1, j) +
         (1 - tx) * ty * v(i, j + 1) + tx * ty * v(i + 1, j + 1);
}

CouplingMap dipole_coupling_map(const CrossSectionGeometry& geometry, double wavelength,
                                const Eigen::Vector2d& orientation,
                                const CouplingMapOptions& options) {
  const double norm = orientation.norm();
  if (!(norm > 0.0)) fail(ErrorCode::invalid_argument, "dipole orientation must be non-zero");
  const Eigen::Vector2d d = orientation / norm;
  const double margin = options.margin < 0.0 ? default_margin(wavelength) : options.margin;
  const DielectricGrid grid =
      rasterize_cross_section(geometry, wavelength, options.spacing, margin);
  const double n_core = geometry.core_index.at(wavelength);
  const double eps_mid = 0.5 * (n_core * n_core + geometry.clad_index * geometry.clad_index);

  CouplingMap map;
  map.grid = grid.spec;
  map.beta = Eigen::ArrayXd::Zero(grid.spec.size());
  map.in_core = grid.eps > eps_mid;
  double dominant = 0.0;
  const std::pair<double, Polarization> parts[] = {{d.x(), Polarization::quasi_te},
                                                   {d.y(), Polarization::quasi_tm}};
  for (const auto& [component, pol] : parts) {
    const double weight = component * component;
    if (weight < 1e-15) continue;
    ModeSolverOptions so = options.solver;
    so.polarization = pol;
    const auto modes = solve_modes(grid, wavelength, 2, so);
    if (modes.empty()) {
      fail(ErrorCode::no_mode, "no guided fundamental mode for the dipole map");
    }
    const GuidedMode& fund = modes.front();
    // Per-direction rate over bulk rate: 3 lambda^2 |E|^2 / (8 pi n_core n_eff)
    // for a field with unit discrete norm.
    const double scale = 3.0 * wavelength * wavelength / (8.0 * kPi * n_core * fund.n_eff);
    map.beta += weight * scale * fund.field.array().square();
    if (weight > dominant) {
      dominant = weight;
      map.n_eff = fund.n_eff;
    }
  }
  double best = -1.0;
  for (int j = 0; j < grid.spec.ny; ++j) {
    for (int i = 0; i < grid.spec.nx; ++i) {
      const int p = grid.spec.index(i, j);
      if (map.in_core(p) && map.beta(p) > best) {
        best = map.beta(p);
        map.argmax_i = i;
        map.argmax_j = j;
      }
    }
  }
  if (best < 0.0) fail(ErrorCode::invalid_geometry, "no grid cell lies inside the core");
  return map;
}

Curve weighted_transmission(const std::vector<Curve>& curves, const std::vector<double>& weights) {
  if (curves.empty()) fail(ErrorCode::invalid_argument, "no curves to combine");
  if (curves.size() != weights.size()) {
    fail(ErrorCode::axis_mismatch, "one weight per curve is required");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) fail(ErrorCode::invalid_argument, "weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg << "weights must sum to 1, got " << sum;
    fail(ErrorCode::invalid_argument, msg.str());
  }
  Curve out;
  out.x = curves.front().x;
  out.y.assign(out.x.size(), 0.0);
  for (std::size_t c = 0; c < curves.size(); ++c) {
    if (curves[c].x != out.x || curves[c].y.size() != out.x.size()) {
      fail(ErrorCode::axis_mismatch, "curves do not share one axis");
    }
    for (std::size_t k = 0; k < out.x.size(); ++k) out.y[k] += weights[c] * curves[c].y[k];
  }
  return out;
}

}  // namespace sicwfi
