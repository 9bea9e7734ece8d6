#include "sicwfi/taper.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <sstream>

#include "sicwfi/constants.hpp"
#include "sicwfi/error.hpp"
#include "sicwfi/parallel.hpp"

namespace sicwfi {

double TaperProfile::width_at(double z) const {
  if (z <= 0.0) return 0.0;
  return std::min(max_width, 2.0 * z * std::tan(deg_to_rad(0.5 * waveguide_angle_deg)));
}

double TaperProfile::fiber_radius_at(double z) const {
  if (z > overlap) return 0.0;
  return tip_radius + (overlap - z) * std::tan(deg_to_rad(0.5 * fiber_angle_deg));
}

CompositeSection TaperProfile::section_at(double z, bool with_beam, bool with_fiber) const {
  CompositeSection s;
  s.width = with_beam ? width_at(z) : 0.0;
  s.apex_half_angle_deg = apex_half_angle_deg;
  s.core_index = core_index.at(wavelength);
  s.clad_index = clad_index;
  s.fiber.radius = with_fiber ? fiber_radius_at(z) : 0.0;
  s.fiber.index = fiber_index;
  s.fiber.gap = gap;
  return s;
}

void TaperProfile::validate() const {
  std::ostringstream msg;
  if (!(waveguide_angle_deg > 0.0 && waveguide_angle_deg < 180.0) ||
      !(fiber_angle_deg > 0.0 && fiber_angle_deg < 180.0)) {
    msg << "taper angles must lie in (0, 180) degrees, got alpha=" << waveguide_angle_deg
        << " beta=" << fiber_angle_deg;
    fail(ErrorCode::invalid_geometry, msg.str());
  }
  if (!(tip_radius >= 0.0) || !(overlap >= 0.0) || !(gap >= 0.0)) {
    fail(ErrorCode::invalid_geometry, "tip radius, overlap and gap must be non-negative");
  }
  if (!(wavelength > 0.0) || !(max_width > 0.0)) {
    fail(ErrorCode::invalid_geometry, "wavelength and beam width must be positive");
  }
  if (!(apex_half_angle_deg > 0.0 && apex_half_angle_deg < 90.0)) {
    fail(ErrorCode::invalid_geometry, "apex half-angle must lie in (0, 90) degrees");
  }
  const double n_core = core_index.at(wavelength);
  if (!(n_core > fiber_index && fiber_index > clad_index && clad_index >= 1.0)) {
    msg << "indices must satisfy n_core > n_fiber > n_clad >= 1, got " << n_core << ", "
        << fiber_index << ", " << clad_index;
    fail(ErrorCode::invalid_geometry, msg.str());
  }
}

double SegmentStack::total_length() const {
  double sum = 0.0;
  for (const auto& s : segments) sum += s.length;
  return sum;
}

int default_segment_count(const TaperProfile& profile) {
  return std::max(1, 4 * static_cast<int>(std::ceil(profile.overlap / profile.wavelength)));
}

SegmentStack build_segments(const TaperProfile& profile, int n_segments) {
  profile.validate();
  if (n_segments < 1) fail(ErrorCode::invalid_argument, "segment count must be >= 1");
  if (profile.overlap == 0.0 && n_segments > 1) {
    fail(ErrorCode::degenerate_stack, "zero overlap cannot be split into several segments");
  }
  SegmentStack stack;
  stack.profile = profile;
  const double dz = profile.overlap / n_segments;
  for (int k = 0; k < n_segments; ++k) {
    Segment s;
    s.z_mid = profile.overlap - (k + 0.5) * dz;
    s.length = dz;
    s.section = profile.section_at(s.z_mid);
    stack.segments.push_back(s);
  }
  return stack;
}

namespace {

std::vector<GuidedMode> supermodes_on(const CompositeSection& section, double wavelength,
                                      int count, const GridSpec& spec, bool even_only,
                                      const EigsOptions& eigs, const Eigen::MatrixXd& warm_start) {
  if (!section.has_beam() && !section.has_fiber()) return {};
  const DielectricGrid grid = rasterize_composite(section, spec);
  ModeSolverOptions so;
  so.polarization = Polarization::scalar;
  so.mirror_x = even_only;
  so.eigs = eigs;
  return solve_modes(grid, wavelength, count, so, warm_start);
}

}  // namespace

std::vector<GuidedMode> local_supermodes(const CompositeSection& section, double wavelength,
                                         int count, const GridSpec& spec, bool even_only,
                                         const Eigen::MatrixXd& warm_start) {
  return supermodes_on(section, wavelength, count, spec, even_only, EigsOptions{}, warm_start);
}

GridSpec stack_grid(const SegmentStack& stack, const EmeOptions& options) {
  const TaperProfile& p = stack.profile;
  const double margin = options.margin < 0.0 ? default_margin(p.wavelength) : options.margin;
  if (!(options.spacing > 0.0)) fail(ErrorCode::invalid_argument, "grid spacing must be positive");
  // The widest beam and the thickest fiber sit at the two ports.
  CompositeSection extent = p.section_at(p.overlap);
  extent.fiber.radius = p.fiber_radius_at(0.0);
  const double half_x = std::max(0.5 * extent.width, extent.fiber.radius) + margin;
  const double ymin = -extent.beam_height() - margin;
  const double ymax = p.gap + 2.0 * extent.fiber.radius + margin;
  if (!options.even_only) return GridSpec::covering(-half_x, half_x, ymin, ymax, options.spacing);
  GridSpec g = GridSpec::covering(0.0, half_x, ymin, ymax, options.spacing);
  g.x0 = 0.5 * g.dx;
  return g;
}

std::string_view direction_name(Direction d) {
  return d == Direction::waveguide_to_fiber ? "waveguide-to-fiber" : "fiber-to-waveguide";
}

EmeSolution solve_stack(const SegmentStack& stack, const EmeOptions& options) {
  if (options.supermodes < 1) fail(ErrorCode::invalid_argument, "supermode count must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  const TaperProfile& p = stack.profile;
  const GridSpec spec = stack_grid(stack, options);

  std::vector<CompositeSection> sections;
  sections.push_back(p.section_at(p.overlap, true, false));
  for (const auto& s : stack.segments) sections.push_back(s.section);
  sections.push_back(p.section_at(0.0, false, true));

  EmeSolution sol;
  std::vector<GuidedMode> prev;
  for (std::size_t k = 0; k < sections.size(); ++k) {
    Eigen::MatrixXd warm;
    if (!prev.empty()) {
      warm.resize(prev.front().field.size(), static_cast<Eigen::Index>(prev.size()));
      for (std::size_t c = 0; c < prev.size(); ++c) warm.col(c) = prev[c].field;
    }
    std::vector<GuidedMode> cur = supermodes_on(sections[k], p.wavelength, options.supermodes, spec,
                                                 options.even_only, options.eigs, warm);
    if (cur.empty()) {
      std::ostringstream msg;
      if (k == 0) {
        msg << "waveguide port carries no guided mode";
      } else if (k + 1 == sections.size()) {
        msg << "fiber port carries no guided mode";
      } else {
        msg << "transfer break: segment " << k - 1 << " carries no guided supermode";
      }
      sol.warnings.push_back(msg.str());
    }
    sol.mode_counts.push_back(static_cast<int>(cur.size()));
    if (k > 0) {
      Eigen::MatrixXd o(prev.size(), cur.size());
      for (std::size_t a = 0; a < prev.size(); ++a) {
        for (std::size_t b = 0; b < cur.size(); ++b) o(a, b) = overlap(prev[a], cur[b]);
      }
      sol.interfaces.push_back(std::move(o));
    }
    if (k > 0 && k + 1 < sections.size()) {
      Eigen::VectorXd beta(cur.size());
      for (std::size_t c = 0; c < cur.size(); ++c) beta(c) = cur[c].beta();
      sol.betas.push_back(std::move(beta));
      sol.lengths.push_back(stack.segments[k - 1].length);
    }
    prev = std::move(cur);
  }
  sol.solve_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

TransferResult propagate(const EmeSolution& solution, Direction direction) {
  TransferResult r;
  r.direction = direction;
  r.warnings = solution.warnings;
  const int n_sections = static_cast<int>(solution.mode_counts.size());
  if (n_sections < 2 || static_cast<int>(solution.interfaces.size()) != n_sections - 1) {
    fail(ErrorCode::invalid_argument, "EME solution is incomplete");
  }
  const bool forward = direction == Direction::waveguide_to_fiber;
  const int entry = forward ? 0 : n_sections - 1;
  const int exit = forward ? n_sections - 1 : 0;
  if (solution.mode_counts[entry] == 0) return r;

  Eigen::VectorXcd a = Eigen::VectorXcd::Zero(solution.mode_counts[entry]);
  a(0) = 1.0;
  for (int step = 0; step < n_sections - 1; ++step) {
    // Interface between sections `from` and `to` in travel order.
    const int from = forward ? step : n_sections - 1 - step;
    const int to = forward ? from + 1 : from - 1;
    const Eigen::MatrixXd& o = solution.interfaces[forward ? from : to];
    const double before = a.squaredNorm();
    a = forward ? Eigen::VectorXcd(o.transpose().cast<std::complex<double>>() * a)
                : Eigen::VectorXcd(o.cast<std::complex<double>>() * a);
    r.lost_power += std::max(0.0, before - a.squaredNorm());
    if (to > 0 && to < n_sections - 1) {
      const int seg = to - 1;
      const Eigen::VectorXd& beta = solution.betas[seg];
      for (Eigen::Index c = 0; c < a.size(); ++c) {
        a(c) *= std::polar(1.0, beta(c) * solution.lengths[seg]);
      }
      r.populations.push_back(a.cwiseAbs2());
    }
  }
  r.guided_power = a.squaredNorm();
  r.transmission = solution.mode_counts[exit] > 0 ? std::norm(a(0)) : 0.0;
  return r;
}

TransferResult propagate_eme(const SegmentStack& stack, Direction direction,
                             const EmeOptions& options) {
  return propagate(solve_stack(stack, options), direction);
}

std::string_view sweep_parameter_name(SweepParameter p) {
  switch (p) {
    case SweepParameter::overlap: return "overlap";
    case SweepParameter::fiber_angle: return "fiber-angle";
    case SweepParameter::tip_radius: return "tip-radius";
    case SweepParameter::wavelength: return "wavelength";
    case SweepParameter::waveguide_angle: return "waveguide-angle";
  }
  return "overlap";
}

SweepParameter parse_sweep_parameter(std::string_view name) {
  for (auto p : {SweepParameter::overlap, SweepParameter::fiber_angle, SweepParameter::tip_radius,
                 SweepParameter::wavelength, SweepParameter::waveguide_angle}) {
    if (name == sweep_parameter_name(p)) return p;
  }
  fail(ErrorCode::invalid_argument, "unknown sweep parameter '" + std::string(name) + "'");
}

Curve sweep_transmission(const TaperProfile& base, SweepParameter parameter,
                         const std::vector<double>& values, const SweepOptions& options) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!(values[k] > 0.0) && !(parameter == SweepParameter::tip_radius && values[k] == 0.0)) {
      fail(ErrorCode::invalid_argument, "sweep values must be positive");
    }
    if (k > 0 && !(values[k] > values[k - 1])) {
      fail(ErrorCode::invalid_argument, "sweep values must be sorted ascending");
    }
  }
  Curve curve;
  curve.x = values;
  curve.y.assign(values.size(), 0.0);

  auto evaluate = [&](std::size_t k) {
    TaperProfile p = base;
    switch (parameter) {
      case SweepParameter::overlap: p.overlap = values[k]; break;
      case SweepParameter::fiber_angle: p.fiber_angle_deg = values[k]; break;
      case SweepParameter::tip_radius: p.tip_radius = values[k]; break;
      case SweepParameter::wavelength: p.wavelength = values[k]; break;
      case SweepParameter::waveguide_angle: p.waveguide_angle_deg = values[k]; break;
    }
    const int n = options.segments > 0 ? options.segments : default_segment_count(p);
    curve.y[k] = propagate_eme(build_segments(p, n), options.direction, options.eme).transmission;
  };

  parallel_for(values.size(), options.workers, evaluate);
  return curve;
}

Curve efficiency_vs_overlap(const TaperProfile& base, const std::vector<double>& overlaps,
                            const SweepOptions& options) {
  return sweep_transmission(base, SweepParameter::overlap, overlaps, options);
}

double plateau_width(const Curve& curve, double threshold) {
  const auto& x = curve.x;
  const auto& y = curve.y;
  if (x.size() != y.size() || x.empty()) fail(ErrorCode::axis_mismatch, "malformed curve");
  const std::size_t peak = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  if (y[peak] < threshold) return 0.0;
  auto crossing = [&](std::size_t inside, std::size_t outside) {
    const double t = (y[inside] - threshold) / (y[inside] - y[outside]);
    return x[inside] + t * (x[outside] - x[inside]);
  };
  std::size_t lo = peak, hi = peak;
  while (lo > 0 && y[lo - 1] >= threshold) --lo;
  while (hi + 1 < y.size() && y[hi + 1] >= threshold) ++hi;
  const double left = lo > 0 ? crossing(lo, lo - 1) : x[lo];
  const double right = hi + 1 < y.size() ? crossing(hi, hi + 1) : x[hi];
  return right - left;
}

double infer_interface_efficiency(double eta_trans, double eta_coupler, double eta_wg) {
  for (double v : {eta_trans, eta_coupler, eta_wg}) {
    if (!(v > 0.0 && v <= 1.0)) fail(ErrorCode::invalid_argument, "efficiencies must lie in (0, 1]");
  }
  const double ratio = eta_trans / (eta_coupler * eta_wg);
  if (ratio > 1.0) {
    std::ostringstream msg;
    msg << "eta_trans " << eta_trans << " exceeds eta_coupler * eta_wg = " << eta_coupler * eta_wg;
    fail(ErrorCode::unphysical_input, msg.str());
  }
  return std::sqrt(ratio);
}

SupportLoss per_support_loss(double t_a, double sigma_a, int n_a, double t_b, double sigma_b,
                             int n_b, double k_sigma) {
  if (n_a == n_b) fail(ErrorCode::invalid_argument, "support counts must differ");
  if (!(t_a > 0.0 && t_a <= 1.0 && t_b > 0.0 && t_b <= 1.0)) {
    fail(ErrorCode::invalid_argument, "transmissions must lie in (0, 1]");
  }
  if (!(sigma_a >= 0.0 && sigma_b >= 0.0 && k_sigma >= 0.0)) {
    fail(ErrorCode::invalid_argument, "uncertainties must be non-negative");
  }
  const double dn = n_a - n_b;
  const double keep = std::pow(t_a / t_b, 1.0 / dn);
  SupportLoss out;
  out.point = 1.0 - keep;
  out.loss = std::max(out.point, 0.0);
  const double rel = std::hypot(sigma_a / t_a, sigma_b / t_b);
  out.sigma = keep * rel / std::abs(dn);
  out.upper_bound = std::max(out.point + k_sigma * out.sigma, 0.0);
  return out;
}

AdiabaticityReport adiabaticity_check(const TaperProfile& profile, double rate_threshold) {
  profile.validate();
  AdiabaticityReport r;
  r.threshold = rate_threshold;
  r.overlap_in_wavelengths = profile.overlap / profile.wavelength;
  r.waveguide_rate = 2.0 * std::tan(deg_to_rad(0.5 * profile.waveguide_angle_deg));
  r.fiber_rate = 2.0 * std::tan(deg_to_rad(0.5 * profile.fiber_angle_deg));
  r.adiabatic = r.overlap_in_wavelengths > 1.0 && r.waveguide_rate <= rate_threshold &&
                r.fiber_rate <= rate_threshold;
  return r;
}

}  // namespace sicwfi
