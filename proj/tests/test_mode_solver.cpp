#include <cmath>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "sicwfi/constants.hpp"
#include "sicwfi/error.hpp"
#include "sicwfi/geometry.hpp"
#include "sicwfi/mode_solver.hpp"

using namespace sicwfi;

namespace {

constexpr double kLambda = 960e-9;

double bisect(const std::function<double(double)>& f, double lo, double hi) {
  double flo = f(lo);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Fundamental even mode of a symmetric slab of thickness d. `ratio` is 1
// for TE and n1^2/n2^2 for TM.
double slab_n_eff(double n1, double n2, double d, double ratio) {
  const double k0 = 2.0 * kPi / kLambda;
  auto f = [&](double n) {
    const double kappa = k0 * std::sqrt(n1 * n1 - n * n);
    const double gamma = k0 * std::sqrt(n * n - n2 * n2);
    return kappa * std::sin(0.5 * kappa * d) - ratio * gamma * std::cos(0.5 * kappa * d);
  };
  // Keep kappa d / 2 below pi / 2 so the root is the fundamental one.
  const double kappa_max = kPi / d;
  const double n_lo = std::sqrt(std::max(n2 * n2, n1 * n1 - std::pow(kappa_max / k0, 2))) + 1e-12;
  return bisect(f, n_lo, n1 - 1e-12);
}

// LP01 of a step-index fiber: u J1(u)/J0(u) = w K1(w)/K0(w), u^2 + w^2 = V^2.
double lp01_n_eff(double n1, double n2, double r) {
  const double k0 = 2.0 * kPi / kLambda;
  const double v = k0 * r * std::sqrt(n1 * n1 - n2 * n2);
  auto f = [&](double u) {
    const double w = std::sqrt(v * v - u * u);
    return u * std::cyl_bessel_j(1.0, u) / std::cyl_bessel_j(0.0, u) -
           w * std::cyl_bessel_k(1.0, w) / std::cyl_bessel_k(0.0, w);
  };
  const double u = bisect(f, 1e-6, std::min(v, 2.404825557695773) - 1e-9);
  const double b = 1.0 - (u * u) / (v * v);
  return std::sqrt(n2 * n2 + b * (n1 * n1 - n2 * n2));
}

// One-column slab: with a mirrored single cell and a very wide cell the x
// part of the operator reduces to -1/dx^2, which is negligible here.
DielectricGrid slab_grid(double n1, double n2, double d, double dy, double half_extent) {
  GridSpec g;
  g.nx = 1;
  g.dx = 1.0;
  g.x0 = 0.5;
  g.dy = dy;
  g.ny = static_cast<int>(std::lround(2.0 * half_extent / dy));
  g.y0 = -half_extent + 0.5 * dy;
  return DielectricGrid::from_function(g, [&](double, double y) {
    return std::abs(y) < 0.5 * d ? n1 * n1 : n2 * n2;
  });
}

DielectricGrid triangle_grid(double w, int half_nx, double spacing, bool half) {
  const Triangle tri{0.5 * w, w / (2.0 * std::tan(deg_to_rad(36.0)))};
  GridSpec g;
  g.dx = g.dy = spacing;
  g.nx = half ? half_nx : 2 * half_nx;
  g.x0 = half ? 0.5 * spacing : -(half_nx - 0.5) * spacing;
  g.ny = 2 * half_nx;
  g.y0 = -(1.5 * half_nx - 0.5) * spacing;
  const double eps_core = 2.6 * 2.6;
  return DielectricGrid::from_function(g, [&](double x, double y) {
    return 1.0 + (eps_core - 1.0) * cell_fill_fraction(tri, x, y, spacing, spacing);
  });
}

}  // namespace

TEST(ModeSolver, ScalarSlabMatchesTransverseResonance) {
  const double n1 = 2.0, n2 = 1.0, d = 300e-9;
  const auto grid = slab_grid(n1, n2, d, 2e-9, 1.5e-6);
  ModeSolverOptions opt;
  opt.polarization = Polarization::scalar;
  opt.mirror_x = true;
  const auto modes = solve_modes(grid, kLambda, 1, opt);
  ASSERT_FALSE(modes.empty());
  EXPECT_NEAR(modes.front().n_eff, slab_n_eff(n1, n2, d, 1.0), 1e-4);
}

TEST(ModeSolver, QuasiTeOnHorizontalSlabIsTe) {
  // E_x lies in the slab plane, so the interface condition is continuity.
  const double n1 = 2.0, n2 = 1.0, d = 300e-9;
  const auto grid = slab_grid(n1, n2, d, 2e-9, 1.5e-6);
  ModeSolverOptions opt;
  opt.polarization = Polarization::quasi_te;
  opt.mirror_x = true;
  const auto modes = solve_modes(grid, kLambda, 1, opt);
  ASSERT_FALSE(modes.empty());
  EXPECT_NEAR(modes.front().n_eff, slab_n_eff(n1, n2, d, 1.0), 1e-4);
}

TEST(ModeSolver, QuasiTmSlabMatchesTmResonance) {
  const double n1 = 2.0, n2 = 1.0, d = 300e-9;
  const auto grid = slab_grid(n1, n2, d, 2e-9, 1.5e-6);
  ModeSolverOptions opt;
  opt.polarization = Polarization::quasi_tm;
  opt.mirror_x = true;
  const auto modes = solve_modes(grid, kLambda, 1, opt);
  ASSERT_FALSE(modes.empty());
  const double tm = slab_n_eff(n1, n2, d, n1 * n1 / (n2 * n2));
  const double te = slab_n_eff(n1, n2, d, 1.0);
  ASSERT_LT(tm, te - 0.05);
  EXPECT_NEAR(modes.front().n_eff, tm, 1e-3);
}

TEST(ModeSolver, StepIndexFiberMatchesLp01) {
  const double n1 = 1.45, n2 = 1.44, r = 2e-6, h = 50e-9;
  const Disk disk{0.0, 0.0, r};
  GridSpec g;
  g.dx = g.dy = h;
  g.nx = 120;
  g.x0 = 0.5 * h;
  g.ny = 240;
  g.y0 = -(120 - 0.5) * h;
  const auto grid = DielectricGrid::from_function(g, [&](double x, double y) {
    return n2 * n2 + (n1 * n1 - n2 * n2) * cell_fill_fraction(disk, x, y, h, h);
  });
  ModeSolverOptions opt;
  opt.polarization = Polarization::scalar;
  opt.mirror_x = true;
  const auto modes = solve_modes(grid, kLambda, 1, opt);
  ASSERT_FALSE(modes.empty());
  EXPECT_NEAR(modes.front().n_eff, lp01_n_eff(n1, n2, r), 1e-3);
}

TEST(ModeSolver, MirrorHalfDomainMatchesFullDomain) {
  const double h = 20e-9;
  const auto full = triangle_grid(490e-9, 40, h, false);
  const auto half = triangle_grid(490e-9, 40, h, true);
  for (Polarization pol : {Polarization::scalar, Polarization::quasi_te, Polarization::quasi_tm}) {
    ModeSolverOptions opt;
    opt.polarization = pol;
    const auto a = solve_modes(full, kLambda, 1, opt);
    opt.mirror_x = true;
    const auto b = solve_modes(half, kLambda, 1, opt);
    ASSERT_FALSE(a.empty());
    ASSERT_FALSE(b.empty());
    EXPECT_NEAR(a.front().n_eff, b.front().n_eff, 1e-9) << polarization_name(pol);
  }
}

TEST(ModeSolver, ModesAreBracketedNormalizedAndSorted) {
  const auto grid = triangle_grid(900e-9, 50, 20e-9, false);
  for (Polarization pol : {Polarization::scalar, Polarization::quasi_te, Polarization::quasi_tm}) {
    ModeSolverOptions opt;
    opt.polarization = pol;
    const auto modes = solve_modes(grid, kLambda, 3, opt);
    ASSERT_FALSE(modes.empty());
    for (std::size_t k = 0; k < modes.size(); ++k) {
      EXPECT_GT(modes[k].n_eff, 1.0);
      EXPECT_LT(modes[k].n_eff, 2.6);
      EXPECT_NEAR(overlap(modes[k], modes[k]), 1.0, 1e-12);
      if (k > 0) EXPECT_GE(modes[k - 1].n_eff, modes[k].n_eff);
      EXPECT_NEAR(modes[k].beta(), 2.0 * kPi / kLambda * modes[k].n_eff, 1e-6);
    }
  }
}

TEST(ModeSolver, ScalarModesAreOrthogonal) {
  const auto grid = triangle_grid(900e-9, 50, 20e-9, false);
  ModeSolverOptions opt;
  opt.polarization = Polarization::scalar;
  const auto modes = solve_modes(grid, kLambda, 3, opt);
  ASSERT_GE(modes.size(), 2u);
  for (std::size_t a = 0; a < modes.size(); ++a) {
    for (std::size_t b = a + 1; b < modes.size(); ++b) {
      EXPECT_NEAR(overlap(modes[a], modes[b]), 0.0, 1e-8);
    }
  }
}

TEST(ModeSolver, FundamentalFieldIsMirrorSymmetric) {
  const auto grid = triangle_grid(490e-9, 40, 20e-9, false);
  const auto modes = solve_modes(grid, kLambda, 1);
  ASSERT_FALSE(modes.empty());
  const auto& m = modes.front();
  const int nx = m.grid.nx;
  for (int j = 0; j < m.grid.ny; ++j) {
    for (int i = 0; i < nx / 2; ++i) {
      EXPECT_NEAR(m.at(i, j), m.at(nx - 1 - i, j), 1e-6 * m.field.maxCoeff());
    }
  }
}

TEST(ModeSolver, NothingGuidedInHomogeneousGrid) {
  GridSpec g;
  g.dx = g.dy = 20e-9;
  g.nx = g.ny = 30;
  const auto grid = DielectricGrid::from_function(g, [](double, double) { return 1.0; });
  ModeSolverOptions opt;
  opt.polarization = Polarization::scalar;
  EXPECT_TRUE(solve_modes(grid, kLambda, 2, opt).empty());
}

TEST(ModeSolver, RejectsInvalidArguments) {
  const auto grid = triangle_grid(490e-9, 10, 40e-9, false);
  EXPECT_THROW(solve_modes(grid, kLambda, 0), Error);
  EXPECT_THROW(solve_modes(grid, -1.0, 1), Error);
  EXPECT_THROW(parse_polarization("diagonal"), Error);
  for (Polarization p : {Polarization::scalar, Polarization::quasi_te, Polarization::quasi_tm}) {
    EXPECT_EQ(parse_polarization(polarization_name(p)), p);
  }
}

TEST(ModeSolver, ModeCountGrowsWithWidth) {
  CrossSectionGeometry g;
  ModeCountOptions opt;
  opt.spacing = 20e-9;
  opt.margin = 500e-9;
  g.width = 300e-9;
  const int narrow = count_guided_modes(g, kLambda, opt);
  g.width = 1200e-9;
  const int wide = count_guided_modes(g, kLambda, opt);
  EXPECT_GE(narrow, 0);
  EXPECT_LE(narrow, 1);
  EXPECT_GT(wide, 1);
}

TEST(ModeSolver, DipoleMapProperties) {
  CrossSectionGeometry g;
  CouplingMapOptions opt;
  opt.spacing = 20e-9;
  opt.margin = 500e-9;
  const CouplingMap map = dipole_coupling_map(g, kLambda, Eigen::Vector2d(0.0, 1.0), opt);
  const GridSpec& s = map.grid;
  EXPECT_TRUE(map.in_core(s.index(map.argmax_i, map.argmax_j)));
  EXPECT_LE(std::abs(s.x(map.argmax_i)), s.dx);
  EXPECT_LT(s.y(map.argmax_j), 0.0);
  EXPECT_GT(map.n_eff, 1.0);
  // A unit-norm field spreads exactly 3 lambda^2 / (8 pi n n_eff) over the plane.
  const double n_core = g.core_index.at(kLambda);
  const double total = map.beta.sum() * s.cell_area();
  EXPECT_NEAR(total, 3.0 * kLambda * kLambda / (8.0 * kPi * n_core * map.n_eff), 1e-9 * total);
  for (int j = 0; j < s.ny; ++j) {
    for (int i = 0; i < s.nx; ++i) {
      EXPECT_GE(map.at(i, j), 0.0);
      EXPECT_NEAR(map.at(i, j), map.at(s.nx - 1 - i, j), 1e-6 * map.max_value());
    }
  }
  EXPECT_NEAR(map.sample(s.x(3), s.y(5)), map.at(3, 5), 1e-12 * map.max_value());
  EXPECT_EQ(map.sample(s.x(0) - 1e-6, 0.0), 0.0);
  EXPECT_THROW(dipole_coupling_map(g, kLambda, Eigen::Vector2d::Zero(), opt), Error);
}

TEST(ModeSolver, WeightedTransmissionIsConvexCombination) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Curve a, b;
    for (int k = 0; k < 7; ++k) {
      a.x.push_back(k);
      b.x.push_back(k);
      a.y.push_back(u(rng));
      b.y.push_back(u(rng));
    }
    const double w = u(rng);
    const Curve c = weighted_transmission({a, b}, {w, 1.0 - w});
    for (int k = 0; k < 7; ++k) {
      EXPECT_NEAR(c.y[k], w * a.y[k] + (1.0 - w) * b.y[k], 1e-15);
      EXPECT_GE(c.y[k], std::min(a.y[k], b.y[k]) - 1e-15);
      EXPECT_LE(c.y[k], std::max(a.y[k], b.y[k]) + 1e-15);
    }
  }
  Curve a{{0, 1}, {0.5, 0.5}}, shifted{{0, 2}, {0.5, 0.5}};
  EXPECT_THROW(weighted_transmission({a, shifted}, {0.5, 0.5}), Error);
  EXPECT_THROW(weighted_transmission({a, a}, {0.5, 0.6}), Error);
  EXPECT_THROW(weighted_transmission({a}, {0.5, 0.5}), Error);
  EXPECT_THROW(weighted_transmission({}, {}), Error);
}
