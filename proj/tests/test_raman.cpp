#include <cmath>
#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "sicwfi/error.hpp"
#include "sicwfi/raman.hpp"

using namespace sicwfi;

namespace {

constexpr double kE2 = 776.5, kE1 = 797.5, kA1 = 964.0;

struct Lines {
  double e1 = kE1, e2 = kE2, a1 = kA1;
  double width = 1.0;  // scales every line width
  bool e1_on = true, e2_on = true, a1_on = true;
};

// Pseudo-Voigt lines on a sloped background, optionally with Gaussian noise
// of standard deviation `noise`.
RamanSpectrum synthetic(const Lines& l, double noise = 0.0, unsigned seed = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, noise > 0.0 ? noise : 1.0);
  auto line = [](double center, double amp, double g, double lo) {
    PseudoVoigt p;
    p.center = center;
    p.amplitude = amp;
    p.gauss_fwhm = g;
    p.lorentz_fwhm = lo;
    return p;
  };
  const double w = l.width;
  const PseudoVoigt e2 = line(l.e2, l.e2_on ? 5000.0 : 0.0, 2.5 * w, 3.0 * w);
  const PseudoVoigt e1 = line(l.e1, l.e1_on ? 1500.0 : 0.0, 2.5 * w, 3.5 * w);
  const PseudoVoigt a1 = line(l.a1, l.a1_on ? 800.0 : 0.0, 4.0 * w, 8.0 * w);
  RamanSpectrum s;
  for (double nu = 740.0; nu <= 1000.0; nu += 0.25) {
    double y = 200.0 + 0.1 * (nu - 740.0) + e2(nu) + e1(nu) + a1(nu);
    if (noise > 0.0) y += n(rng);
    s.wavenumber.push_back(nu);
    s.counts.push_back(std::max(0.0, y));
  }
  return s;
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

TEST(PseudoVoigt, ShapeLimits) {
  PseudoVoigt p;
  p.center = 10.0;
  p.amplitude = 3.0;
  p.gauss_fwhm = 2.0;
  p.lorentz_fwhm = 1e-9;
  EXPECT_NEAR(p.eta(), 0.0, 1e-6);
  EXPECT_NEAR(p(10.0), 3.0, 1e-12);
  EXPECT_NEAR(p(11.0), 1.5, 1e-6);
  p.gauss_fwhm = 1e-9;
  p.lorentz_fwhm = 2.0;
  EXPECT_NEAR(p.eta(), 1.0, 1e-6);
  EXPECT_NEAR(p(11.0), 1.5, 1e-6);
  p.gauss_fwhm = 2.0;
  EXPECT_GT(p.total_fwhm(), 2.0);
  EXPECT_LT(p.total_fwhm(), 4.0);
  p.c0 = 7.0;
  p.c1 = 0.5;
  p.pivot = 10.0;
  EXPECT_NEAR(p(1e6), 7.0 + 0.5 * (1e6 - 10.0), 1e-3);
}

TEST(RamanModes, NamesRoundTrip) {
  for (auto m : {RamanMode::e1_to, RamanMode::e2_to, RamanMode::a1_lo}) {
    EXPECT_EQ(parse_raman_mode(raman_mode_name(m)), m);
    const auto w = default_window(m);
    EXPECT_LT(w[0], w[1]);
  }
  EXPECT_THROW(parse_raman_mode("B1"), Error);
}

TEST(FitPeak, NoiselessIsolatedLineIsExact) {
  Lines only_e2;
  only_e2.e1_on = only_e2.a1_on = false;
  const RamanSpectrum s = synthetic(only_e2);
  const auto w = default_window(RamanMode::e2_to);
  const PeakFit f = fit_peak(s, w[0], w[1], RamanMode::e2_to);
  EXPECT_NEAR(f.center(), kE2, 1e-3);
  EXPECT_NEAR(f.profile.gauss_fwhm, 2.5, 1e-2);
  EXPECT_NEAR(f.profile.lorentz_fwhm, 3.0, 1e-2);
  EXPECT_NEAR(f.profile.amplitude, 5000.0, 1.0);
  EXPECT_EQ(f.label, RamanMode::e2_to);
  Lines only_e1;
  only_e1.e2_on = only_e1.a1_on = false;
  const auto w1 = default_window(RamanMode::e1_to);
  EXPECT_NEAR(fit_peak(synthetic(only_e1), w1[0], w1[1], RamanMode::e1_to).center(), kE1, 1e-3);
  const auto wa = default_window(RamanMode::a1_lo);
  EXPECT_NEAR(fit_peak(synthetic(Lines{}), wa[0], wa[1], RamanMode::a1_lo).center(), kA1, 1e-3);
}

TEST(FitPeak, NoisyCenterWithinUncertainty) {
  int inside = 0;
  const int runs = 40;
  for (int seed = 0; seed < runs; ++seed) {
    const RamanSpectrum s = synthetic(Lines{}, 30.0, 100 + seed);
    const PeakFit f = fit_peak(s, 765.0, 787.0, RamanMode::e2_to);
    EXPECT_GT(f.sigma_center, 0.0);
    if (std::abs(f.center() - kE2) <= 2.0 * f.sigma_center) ++inside;
  }
  EXPECT_GE(inside, 34);
}

TEST(FitPeak, FlatSpectrumHasNoPeak) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 10.0);
  RamanSpectrum s;
  for (double nu = 740.0; nu <= 820.0; nu += 0.25) {
    s.wavenumber.push_back(nu);
    s.counts.push_back(500.0 + n(rng));
  }
  EXPECT_EQ(code_of([&] { fit_peak(s, 765.0, 787.0, RamanMode::e2_to); }), ErrorCode::no_peak);
}

TEST(FitPeak, SingleSpikeIsRejected) {
  const double noise = 20.0;
  const RamanSpectrum clean = synthetic(Lines{}, noise, 77);
  RamanSpectrum spiked = clean;
  std::size_t k = 0;
  while (spiked.wavenumber[k] < 779.0) ++k;
  spiked.counts[k] += 50.0 * noise * 50.0;  // far above the shot-noise floor
  const PeakFit a = fit_peak(clean, 765.0, 787.0, RamanMode::e2_to);
  const PeakFit b = fit_peak(spiked, 765.0, 787.0, RamanMode::e2_to);
  EXPECT_NEAR(a.center(), b.center(), 0.01);
  EXPECT_GE(b.rejected_points, 1);
  const auto mask = cosmic_mask(spiked.counts);
  EXPECT_TRUE(mask[k]);
}

TEST(FitPeak, WindowPreconditions) {
  const RamanSpectrum s = synthetic(Lines{});
  EXPECT_THROW(fit_peak(s, 776.0, 777.0, RamanMode::e2_to), Error);
  EXPECT_THROW(fit_peak(s, 2000.0, 2100.0, RamanMode::e2_to), Error);
  RamanSpectrum bad = s;
  std::swap(bad.wavenumber[0], bad.wavenumber[1]);
  EXPECT_THROW(bad.validate(), Error);
  bad = s;
  bad.counts[3] = -1.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Shifts, SubtractionAndQuadrature) {
  PeakFit a, b;
  a.label = b.label = RamanMode::e2_to;
  a.profile.center = 778.1;
  b.profile.center = 776.5;
  a.sigma_center = 0.03;
  b.sigma_center = 0.04;
  const Shift s = shifts_from_reference(a, b);
  EXPECT_NEAR(s.value, 1.6, 1e-12);
  EXPECT_NEAR(s.sigma, 0.05, 1e-12);
  EXPECT_EQ(shifts_from_reference(a, a).value, 0.0);
  b.label = RamanMode::e1_to;
  EXPECT_EQ(code_of([&] { shifts_from_reference(a, b); }), ErrorCode::label_mismatch);
}

TEST(Stress, ForwardShiftsHandValues) {
  EXPECT_EQ(forward_shifts(StressState{}).value.norm(), 0.0);
  StressState perp;
  perp.perp = -1.0;
  const auto a = forward_shifts(perp).value;
  EXPECT_NEAR(a(0), 4.12, 1e-12);
  EXPECT_NEAR(a(1), 3.10, 1e-12);
  EXPECT_NEAR(a(2), 2.248, 1e-12);
  StressState para;
  para.para = -1.0;
  const auto b = forward_shifts(para).value;
  EXPECT_NEAR(b(0), 0.43, 1e-12);
  EXPECT_NEAR(b(1), 0.74, 1e-12);
  EXPECT_NEAR(b(2), 0.651, 1e-12);
}

TEST(Stress, RoundTripAndConsistencyCollapse) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 1000; ++k) {
    StressState s;
    s.para = u(rng);
    s.perp = u(rng);
    const StressSolution r = shifts_to_stress(forward_shifts(s));
    EXPECT_NEAR(r.stress.para, s.para, 1e-10);
    EXPECT_NEAR(r.stress.perp, s.perp, 1e-10);
    ASSERT_EQ(r.pairwise.size(), 3u);
    for (const auto& p : r.pairwise) {
      EXPECT_NEAR(p(0), s.perp, 1e-10);
      EXPECT_NEAR(p(1), s.para, 1e-10);
    }
    EXPECT_LT(r.spread.maxCoeff(), 1e-10);
  }
  const StressSolution zero = shifts_to_stress(ShiftTriple{});
  EXPECT_EQ(zero.stress.para, 0.0);
  EXPECT_EQ(zero.stress.perp, 0.0);
}

TEST(Stress, Superposition) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int k = 0; k < 200; ++k) {
    ShiftTriple a, b, c;
    for (int i = 0; i < 3; ++i) {
      a.value(i) = u(rng);
      b.value(i) = u(rng);
    }
    c.value = a.value + b.value;
    const auto sa = shifts_to_stress(a).stress, sb = shifts_to_stress(b).stress;
    const auto sc = shifts_to_stress(c).stress;
    EXPECT_NEAR(sc.para, sa.para + sb.para, 1e-12);
    EXPECT_NEAR(sc.perp, sa.perp + sb.perp, 1e-12);
    const auto ea = stress_to_strain(sa), eb = stress_to_strain(sb), ec = stress_to_strain(sc);
    EXPECT_NEAR(ec.para, ea.para + eb.para, 1e-12);
    EXPECT_NEAR(ec.perp, ea.perp + eb.perp, 1e-12);
  }
}

TEST(Stress, NoisyShiftsRecoveredWithinUncertainty) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 0.05);
  StressState truth;
  truth.perp = -0.5;
  truth.para = -1.0;
  const ShiftTriple clean = forward_shifts(truth);
  int inside = 0;
  const int runs = 500;
  for (int k = 0; k < runs; ++k) {
    ShiftTriple s = clean;
    for (int i = 0; i < 3; ++i) {
      s.value(i) += n(rng);
      s.sigma(i) = 0.05;
    }
    const StressSolution r = shifts_to_stress(s);
    EXPECT_GE(r.stress.sigma_para, r.propagated(1));
    EXPECT_GE(r.stress.sigma_perp, r.propagated(0));
    if (std::abs(r.stress.para - truth.para) <= 2.0 * r.stress.sigma_para &&
        std::abs(r.stress.perp - truth.perp) <= 2.0 * r.stress.sigma_perp) {
      ++inside;
    }
  }
  EXPECT_GE(inside, static_cast<int>(0.9 * runs));
}

TEST(Stress, TwoPeakVariant) {
  StressState s;
  s.para = 0.7;
  s.perp = -0.2;
  ShiftTriple t = forward_shifts(s);
  t.has_a1 = false;
  t.value(2) = 123.0;  // ignored
  const StressSolution r = shifts_to_stress(t);
  EXPECT_TRUE(r.two_peak);
  EXPECT_NEAR(r.stress.para, 0.7, 1e-10);
  EXPECT_NEAR(r.stress.perp, -0.2, 1e-10);
}

TEST(Stress, DegeneratePairIsReported) {
  DeformationPotentials p;
  p.a_e2 = p.a_e1;
  p.b_e2 = p.b_e1;
  EXPECT_EQ(code_of([&] { shifts_to_stress(ShiftTriple{}, p); }), ErrorCode::degenerate_system);
}

TEST(Strain, HandEvaluation) {
  StressState s;
  s.perp = -1.0;
  const StrainState e = stress_to_strain(s);
  // -553 / (501*553 + 111*553 - 52^2) and -104 / (2*52^2 - 553*612)
  EXPECT_NEAR(e.perp, -553.0 / 335732.0, 1e-15);
  EXPECT_NEAR(e.para, 104.0 / 333028.0, 1e-15);
  const StrainState z = stress_to_strain(StressState{});
  EXPECT_EQ(z.para, 0.0);
  EXPECT_EQ(z.perp, 0.0);
}

TEST(Strain, InverseRoundTrip) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  for (int k = 0; k < 1000; ++k) {
    StrainState e;
    e.para = u(rng);
    e.perp = u(rng);
    const StrainState back = stress_to_strain(strain_to_stress(e));
    EXPECT_NEAR(back.para, e.para, 1e-12);
    EXPECT_NEAR(back.perp, e.perp, 1e-12);
  }
  StiffnessConstants bad;
  bad.c11 = -1.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(A1Constants, RecoveredFromSyntheticData) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const DeformationPotentials truth;  // a_A1 = -1.124, b_A1 = -0.651
  DeformationPotentials blind = truth;
  blind.a_a1 = 0.0;
  blind.b_a1 = 0.0;
  std::vector<ShiftTriple> data;
  for (int k = 0; k < 12; ++k) {
    StressState s;
    s.para = u(rng);
    s.perp = u(rng);
    data.push_back(forward_shifts(s, truth));
  }
  const A1Constants c = derive_a1_constants(data, blind);
  EXPECT_NEAR(c.a, -1.124, 1e-9);
  EXPECT_NEAR(c.b, -0.651, 1e-9);
  EXPECT_LT(c.residual_rms, 1e-9);

  EXPECT_EQ(code_of([&] { derive_a1_constants({data.front()}, blind); }),
            ErrorCode::rank_deficient);
  StressState s;
  s.para = 1.0;
  s.perp = 0.5;
  std::vector<ShiftTriple> collinear = {forward_shifts(s, truth)};
  s.para = 2.0;
  s.perp = 1.0;
  collinear.push_back(forward_shifts(s, truth));
  EXPECT_EQ(code_of([&] { derive_a1_constants(collinear, blind); }), ErrorCode::rank_deficient);
}

TEST(A1Constants, NoisyEnsembleWithinConfidence) {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::normal_distribution<double> n(0.0, 0.02);
  const DeformationPotentials truth;
  int inside = 0;
  const int runs = 200;
  for (int r = 0; r < runs; ++r) {
    std::vector<ShiftTriple> data;
    for (int k = 0; k < 15; ++k) {
      StressState s;
      s.para = u(rng);
      s.perp = u(rng);
      ShiftTriple t = forward_shifts(s, truth);
      t.value(2) += n(rng);
      data.push_back(t);
    }
    const A1Constants c = derive_a1_constants(data, truth);
    if (std::abs(c.a - truth.a_a1) <= 2.0 * c.sigma_a &&
        std::abs(c.b - truth.b_a1) <= 2.0 * c.sigma_b) {
      ++inside;
    }
  }
  EXPECT_GE(inside, static_cast<int>(0.85 * runs));
}

TEST(StrainMap, IdenticalSpectraGiveZeroMaps) {
  const RamanSpectrum ref = synthetic(Lines{});
  std::vector<RamanSpectrum> scan;
  for (int iy = 0; iy < 2; ++iy) {
    for (int ix = 0; ix < 3; ++ix) {
      RamanSpectrum s = ref;
      s.position = Eigen::Vector2d(ix * 0.5, iy * 0.5);
      scan.push_back(s);
    }
  }
  const StrainMap m = build_strain_map(scan, ref);
  ASSERT_EQ(m.x.size(), 3u);
  ASSERT_EQ(m.y.size(), 2u);
  EXPECT_EQ(m.failed, 0);
  EXPECT_LT(m.eps_para.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(m.eps_perp.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(StrainMap, RampRecoveredAndGapsKept) {
  const DeformationPotentials pot;
  Lines narrow;
  narrow.width = 0.5;
  const RamanSpectrum ref = synthetic(narrow);
  std::vector<RamanSpectrum> scan;
  std::vector<StressState> truth;
  for (int iy = 0; iy < 3; ++iy) {
    for (int ix = 0; ix < 3; ++ix) {
      if (ix == 2 && iy == 1) continue;  // gap in the scan
      StressState s;
      s.perp = -0.3 * ix;
      s.para = -0.2 * iy;
      const Eigen::Vector3d d = forward_shifts(s, pot).value;
      Lines l;
      l.e1 = kE1 + d(0);
      l.e2 = kE2 + d(1);
      l.a1 = kA1 + d(2);
      l.width = 0.5;
      RamanSpectrum sp = synthetic(l);
      sp.position = Eigen::Vector2d(ix * 1.0, iy * 1.0);
      scan.push_back(sp);
    }
  }
  StrainMapOptions opt;
  opt.workers = 2;
  const StrainMap m = build_strain_map(scan, ref, opt);
  EXPECT_EQ(m.failed, 0);
  for (int iy = 0; iy < 3; ++iy) {
    for (int ix = 0; ix < 3; ++ix) {
      if (ix == 2 && iy == 1) {
        EXPECT_TRUE(std::isnan(m.eps_para(iy, ix)));
        continue;
      }
      StressState s;
      s.perp = -0.3 * ix;
      s.para = -0.2 * iy;
      const StrainState e = stress_to_strain(s);
      EXPECT_NEAR(m.stress_perp(iy, ix), s.perp, 2e-3);
      EXPECT_NEAR(m.stress_para(iy, ix), s.para, 2e-3);
      // 2e-3 GPa through compliances of at most 3e-3 per GPa.
      EXPECT_NEAR(m.eps_para(iy, ix), e.para, 6e-6);
      EXPECT_NEAR(m.eps_perp(iy, ix), e.perp, 6e-6);
      EXPECT_LE(std::abs(m.eps_para(iy, ix)), 1e-3);
      EXPECT_LE(std::abs(m.eps_perp(iy, ix)), 3.5e-3);
    }
  }
}

TEST(StrainMap, ReferenceFailureAborts) {
  RamanSpectrum flat;
  for (double nu = 740.0; nu <= 1000.0; nu += 0.25) {
    flat.wavenumber.push_back(nu);
    flat.counts.push_back(100.0 + std::sin(nu));
  }
  RamanSpectrum s = synthetic(Lines{});
  s.position = Eigen::Vector2d(0.0, 0.0);
  EXPECT_EQ(code_of([&] { build_strain_map({s}, flat); }), ErrorCode::reference_failure);
}
