#include <cmath>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "sicwfi/constants.hpp"
#include "sicwfi/error.hpp"
#include "sicwfi/taper.hpp"

using namespace sicwfi;

namespace {

EmeOptions coarse_eme() {
  EmeOptions o;
  o.spacing = 40e-9;
  o.margin = 700e-9;
  o.supermodes = 4;
  return o;
}

TaperProfile short_profile(double overlap) {
  TaperProfile p;
  p.overlap = overlap;
  p.waveguide_angle_deg = 4.0;
  p.fiber_angle_deg = 4.0;
  return p;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return static_cast<ErrorCode>(0);
}

}  // namespace

TEST(TaperProfile, WidthChangeAcrossOverlap) {
  TaperProfile p;
  p.overlap = 15e-6;
  p.max_width = 1e-3;  // never clamp here
  // 2 L tan(1 deg) = 30e-6 * 0.017455 = 523.7 nm
  EXPECT_NEAR(p.width_at(p.overlap) - p.width_at(0.0), 523.7e-9, 0.5e-9);
  p.max_width = 490e-9;
  EXPECT_DOUBLE_EQ(p.width_at(p.overlap), 490e-9);
  EXPECT_DOUBLE_EQ(p.width_at(-1e-6), 0.0);
}

TEST(TaperProfile, BrokenTipShortensTheCone) {
  TaperProfile ideal, broken;
  broken.tip_radius = 170e-9;
  const double slope = std::tan(deg_to_rad(0.5 * 1.95));
  // r_tip / tan(beta / 2) = 170 nm / 0.0170179 = 9.99 um
  for (double z : {0.0, 3e-6, 9e-6, 14e-6}) {
    const double missing = (broken.fiber_radius_at(z) - ideal.fiber_radius_at(z)) / slope;
    EXPECT_NEAR(missing, 10.0e-6, 0.02e-6);
  }
  EXPECT_DOUBLE_EQ(broken.fiber_radius_at(broken.overlap), 170e-9);
  EXPECT_DOUBLE_EQ(broken.fiber_radius_at(broken.overlap + 1e-9), 0.0);
}

TEST(TaperProfile, InvalidProfilesAreRejected) {
  TaperProfile p;
  p.fiber_index = 3.0;
  EXPECT_EQ(code_of([&] { p.validate(); }), ErrorCode::invalid_geometry);
  p = TaperProfile{};
  p.waveguide_angle_deg = 0.0;
  EXPECT_EQ(code_of([&] { p.validate(); }), ErrorCode::invalid_geometry);
  p = TaperProfile{};
  p.overlap = -1e-6;
  EXPECT_EQ(code_of([&] { p.validate(); }), ErrorCode::invalid_geometry);
}

TEST(SegmentStack, StaircaseInvariants) {
  TaperProfile p;
  p.overlap = 12e-6;
  const SegmentStack s = build_segments(p, 24);
  ASSERT_EQ(s.segments.size(), 24u);
  EXPECT_NEAR(s.total_length(), p.overlap, 1e-18);
  for (std::size_t k = 1; k < s.segments.size(); ++k) {
    const auto& a = s.segments[k - 1].section;
    const auto& b = s.segments[k].section;
    // Waveguide-to-fiber order: the beam narrows and the fiber thickens.
    EXPECT_LE(b.width, a.width);
    EXPECT_GE(b.fiber.radius, a.fiber.radius);
    EXPECT_NEAR(s.segments[k - 1].z_mid - s.segments[k].z_mid, p.overlap / 24, 1e-18);
  }
  EXPECT_EQ(default_segment_count(p), 4 * 13);
}

TEST(SegmentStack, ZeroOverlap) {
  TaperProfile p;
  p.overlap = 0.0;
  const SegmentStack s = build_segments(p, 1);
  ASSERT_EQ(s.segments.size(), 1u);
  EXPECT_EQ(s.segments.front().length, 0.0);
  EXPECT_EQ(default_segment_count(p), 1);
  EXPECT_EQ(code_of([&] { build_segments(p, 3); }), ErrorCode::degenerate_stack);
  EXPECT_EQ(code_of([&] { build_segments(TaperProfile{}, 0); }), ErrorCode::invalid_argument);
}

TEST(Supermodes, DistantCoresMatchIsolatedCores) {
  CompositeSection both;
  both.width = 490e-9;
  both.core_index = 2.6;
  both.fiber.radius = 600e-9;
  both.fiber.index = 1.45;
  both.fiber.gap = 3.0 * 960e-9;
  const GridSpec spec = [&] {
    GridSpec g = grid_for_composite(both, 20e-9, 1.0e-6);
    const int half = (g.nx + 1) / 2;
    g.nx = half;
    g.x0 = 0.5 * g.dx;
    return g;
  }();
  CompositeSection beam = both, fiber = both;
  beam.fiber.radius = 0.0;
  fiber.width = 0.0;
  const auto sb = local_supermodes(beam, 960e-9, 1, spec, true);
  const auto sf = local_supermodes(fiber, 960e-9, 1, spec, true);
  const auto s2 = local_supermodes(both, 960e-9, 2, spec, true);
  ASSERT_EQ(sb.size(), 1u);
  ASSERT_EQ(sf.size(), 1u);
  ASSERT_EQ(s2.size(), 2u);
  EXPECT_NEAR(s2[0].n_eff, std::max(sb[0].n_eff, sf[0].n_eff), 1e-4);
  EXPECT_NEAR(s2[1].n_eff, std::min(sb[0].n_eff, sf[0].n_eff), 1e-4);
}

TEST(Supermodes, TouchingCoresShowAvoidedCrossing) {
  CompositeSection fiber;
  fiber.width = 0.0;
  fiber.core_index = 2.6;
  fiber.fiber.radius = 450e-9;
  const double lambda = 960e-9;
  CompositeSection probe = fiber;
  probe.width = 490e-9;
  GridSpec g = grid_for_composite(probe, 20e-9, 900e-9);
  g.nx = (g.nx + 1) / 2;
  g.x0 = 0.5 * g.dx;
  const double nf = local_supermodes(fiber, lambda, 1, g, true).at(0).n_eff;
  // Pick the beam width whose isolated index is closest to the fiber's.
  double best_w = 0.0, best_nb = 0.0;
  for (double w = 120e-9; w <= 490e-9; w += 10e-9) {
    CompositeSection beam = fiber;
    beam.fiber.radius = 0.0;
    beam.width = w;
    const auto m = local_supermodes(beam, lambda, 1, g, true);
    if (m.empty()) continue;
    if (best_w == 0.0 || std::abs(m[0].n_eff - nf) < std::abs(best_nb - nf)) {
      best_w = w;
      best_nb = m[0].n_eff;
    }
  }
  ASSERT_GT(best_w, 0.0);
  CompositeSection both = fiber;
  both.width = best_w;
  const auto s = local_supermodes(both, lambda, 2, g, true);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_GT(s[0].n_eff - s[1].n_eff, std::abs(nf - best_nb));
}

TEST(Supermodes, AbsentFiberGivesBareWaveguide) {
  CompositeSection beam;
  beam.width = 490e-9;
  beam.core_index = 2.6;
  GridSpec g = grid_for_composite(beam, 20e-9, 800e-9);
  CompositeSection same = beam;
  same.fiber.radius = 0.0;
  same.fiber.index = 1.45;
  const auto a = local_supermodes(beam, 960e-9, 2, g);
  const auto b = local_supermodes(same, 960e-9, 2, g);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].n_eff, b[k].n_eff);
}

TEST(Eme, UniformStackIsIdentity) {
  CompositeSection s;
  s.width = 490e-9;
  s.core_index = 2.6;
  s.fiber.radius = 300e-9;
  GridSpec g = grid_for_composite(s, 20e-9, 800e-9);
  g.nx = (g.nx + 1) / 2;
  g.x0 = 0.5 * g.dx;
  const auto modes = local_supermodes(s, 960e-9, 3, g, true);
  ASSERT_FALSE(modes.empty());
  const int m = static_cast<int>(modes.size());
  Eigen::MatrixXd o(m, m);
  Eigen::VectorXd beta(m);
  for (int a = 0; a < m; ++a) {
    beta(a) = modes[a].beta();
    for (int b = 0; b < m; ++b) o(a, b) = overlap(modes[a], modes[b]);
  }
  EmeSolution sol;
  const int segments = 10;
  sol.mode_counts.assign(segments + 2, m);
  for (int k = 0; k < segments; ++k) {
    sol.betas.push_back(beta);
    sol.lengths.push_back(1e-6);
  }
  for (int k = 0; k <= segments; ++k) sol.interfaces.push_back(o);
  for (Direction d : {Direction::waveguide_to_fiber, Direction::fiber_to_waveguide}) {
    const TransferResult r = propagate(sol, d);
    EXPECT_GT(r.transmission, 1.0 - 1e-6);
    EXPECT_LE(r.guided_power, 1.0 + 1e-6);
    EXPECT_EQ(r.populations.size(), static_cast<std::size_t>(segments));
  }
}

TEST(Eme, ReciprocityAndEnergyOnRandomProfiles) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> angle(1.5, 8.0), length(1e-6, 6e-6), tip(0.0, 200e-9);
  int guided = 0;
  for (int trial = 0; trial < 4; ++trial) {
    TaperProfile p;
    p.waveguide_angle_deg = angle(rng);
    p.fiber_angle_deg = angle(rng);
    p.overlap = length(rng);
    p.tip_radius = tip(rng);
    const SegmentStack stack = build_segments(p, 8);
    const EmeSolution sol = solve_stack(stack, coarse_eme());
    const auto fwd = propagate(sol, Direction::waveguide_to_fiber);
    const auto rev = propagate(sol, Direction::fiber_to_waveguide);
    EXPECT_NEAR(fwd.transmission, rev.transmission, 1e-3) << "trial " << trial;
    const bool ports = sol.mode_counts.front() > 0 && sol.mode_counts.back() > 0;
    if (!ports) EXPECT_FALSE(sol.warnings.empty());
    guided += ports;
    for (const auto& r : {fwd, rev}) {
      // Nothing is launched from an unguided port.
      const int entry = r.direction == Direction::waveguide_to_fiber ? 0 : 1;
      const double launched =
          (entry == 0 ? sol.mode_counts.front() : sol.mode_counts.back()) > 0 ? 1.0 : 0.0;
      EXPECT_LE(r.guided_power, 1.0 + 1e-6);
      EXPECT_LE(r.transmission, r.guided_power + 1e-12);
      EXPECT_NEAR(r.guided_power + r.lost_power, launched, 1e-6);
    }
  }
  EXPECT_GE(guided, 2);
}

TEST(Eme, StaircaseConverges) {
  const TaperProfile p = short_profile(4e-6);
  double prev_t = -1.0, prev_step = 1.0;
  for (int n : {4, 8, 16, 32}) {
    const double t = propagate_eme(build_segments(p, n), Direction::waveguide_to_fiber,
                                   coarse_eme()).transmission;
    if (prev_t >= 0.0) {
      const double step = std::abs(t - prev_t);
      EXPECT_LT(step, prev_step + 1e-6) << "n=" << n;
      prev_step = step;
    }
    prev_t = t;
  }
}

TEST(Eme, SweepMatchesPointwisePropagation) {
  const TaperProfile p = short_profile(3e-6);
  SweepOptions opt;
  opt.eme = coarse_eme();
  opt.segments = 6;
  opt.workers = 2;
  const std::vector<double> overlaps = {2e-6, 3e-6};
  const Curve c = efficiency_vs_overlap(p, overlaps, opt);
  ASSERT_EQ(c.y.size(), 2u);
  for (std::size_t k = 0; k < overlaps.size(); ++k) {
    TaperProfile q = p;
    q.overlap = overlaps[k];
    const double t =
        propagate_eme(build_segments(q, 6), Direction::waveguide_to_fiber, opt.eme).transmission;
    EXPECT_DOUBLE_EQ(c.y[k], t);
    EXPECT_GE(c.y[k], 0.0);
    EXPECT_LE(c.y[k], 1.0 + 1e-6);
  }
  EXPECT_THROW(efficiency_vs_overlap(p, {3e-6, 2e-6}, opt), Error);
  EXPECT_THROW(efficiency_vs_overlap(p, {-1e-6}, opt), Error);
}

TEST(Eme, SweepParameterNamesRoundTrip) {
  for (auto s : {SweepParameter::overlap, SweepParameter::fiber_angle, SweepParameter::tip_radius,
                 SweepParameter::wavelength, SweepParameter::waveguide_angle}) {
    EXPECT_EQ(parse_sweep_parameter(sweep_parameter_name(s)), s);
  }
  EXPECT_THROW(parse_sweep_parameter("gap"), Error);
}

TEST(Plateau, WidthWithInterpolatedCrossings) {
  const Curve c{{0, 1, 2, 3, 4, 5}, {0.1, 0.5, 0.9, 0.95, 0.7, 0.2}};
  // Crossings of 0.8: between x=1,2 at 1.75 and between x=3,4 at 3.6.
  EXPECT_NEAR(plateau_width(c, 0.8), 3.6 - 1.75, 1e-12);
  EXPECT_EQ(plateau_width(c, 0.99), 0.0);
  EXPECT_NEAR(plateau_width(c, 0.0), 5.0, 1e-12);
  EXPECT_THROW(plateau_width(Curve{{0, 1}, {0.5}}, 0.3), Error);
}

TEST(Plateau, WidthShrinksWithThreshold) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Curve c;
    for (int k = 0; k < 20; ++k) {
      c.x.push_back(k);
      c.y.push_back(u(rng));
    }
    EXPECT_GE(plateau_width(c, 0.3), plateau_width(c, 0.6));
  }
}

TEST(InterfaceEfficiency, Algebra) {
  // sqrt(0.7744 / (0.9 * 0.98))
  EXPECT_NEAR(infer_interface_efficiency(0.7744, 0.9, 0.98), 0.9370190, 1e-6);
  EXPECT_DOUBLE_EQ(infer_interface_efficiency(0.9 * 0.98, 0.9, 0.98), 1.0);
  EXPECT_EQ(code_of([] { infer_interface_efficiency(0.95, 0.9, 0.98); }),
            ErrorCode::unphysical_input);
  EXPECT_EQ(code_of([] { infer_interface_efficiency(0.0, 0.9, 0.98); }),
            ErrorCode::invalid_argument);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const double eta = u(rng), c = u(rng), w = u(rng);
    EXPECT_NEAR(infer_interface_efficiency(eta * eta * c * w, c, w), eta, 1e-12);
  }
}

TEST(SupportLoss, ClosedFormAndBounds) {
  const SupportLoss a = per_support_loss(0.98 * 0.98, 0.0, 2, 0.98, 0.0, 1);
  EXPECT_NEAR(a.point, 0.02, 1e-12);
  EXPECT_NEAR(a.loss, 0.02, 1e-12);
  const SupportLoss same = per_support_loss(0.8, 0.0, 5, 0.8, 0.0, 2);
  EXPECT_NEAR(same.loss, 0.0, 1e-15);
  // Three supports 76.4 +- 0.9 %, four supports 77.1 +- 1.1 %.
  const SupportLoss m = per_support_loss(0.764, 0.009, 3, 0.771, 0.011, 4);
  EXPECT_LE(m.point, 0.0);
  EXPECT_EQ(m.loss, 0.0);
  EXPECT_GT(m.upper_bound, 0.0);
  EXPECT_LE(m.upper_bound, 0.01);
  EXPECT_THROW(per_support_loss(0.8, 0.0, 2, 0.9, 0.0, 2), Error);
  EXPECT_THROW(per_support_loss(1.2, 0.0, 2, 0.9, 0.0, 1), Error);
}

TEST(Adiabaticity, LengthAndRateCriteria) {
  TaperProfile p;
  p.overlap = 15e-6;
  EXPECT_TRUE(adiabaticity_check(p).adiabatic);
  EXPECT_NEAR(adiabaticity_check(p).overlap_in_wavelengths, 15.625, 1e-12);
  p.overlap = 0.5e-6;
  EXPECT_FALSE(adiabaticity_check(p).adiabatic);
  p.overlap = 15e-6;
  p.waveguide_angle_deg = 20.0;
  for (double l : {5e-6, 15e-6, 100e-6}) {
    p.overlap = l;
    EXPECT_FALSE(adiabaticity_check(p).adiabatic);
  }
}
