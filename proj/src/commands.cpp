#include "sicwfi/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <thread>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "sicwfi/constants.hpp"
#include "sicwfi/error.hpp"
#include "sicwfi/mode_solver.hpp"
#include "sicwfi/parallel.hpp"
#include "sicwfi/photon_stats.hpp"
#include "sicwfi/raman.hpp"
#include "sicwfi/spin.hpp"
#include "sicwfi/table_io.hpp"
#include "sicwfi/taper.hpp"

namespace sicwfi {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string_view software_version() { return "0.1.0"; }

namespace {

/// Shared state of one command run.
struct Run {
  const RunConfig& config;
  const RunContext& context;
  int workers = 1;
  RunReport report;
  json constants = json::object();

  void log(const std::string& line) const {
    if (context.verbose && context.log) *context.log << line << '\n';
  }

  fs::path input(const std::string& key) {
    const std::string& p = config.text(key);
    if (p.empty()) fail(ErrorCode::invalid_argument, "'" + key + "' names no input file");
    if (!fs::is_regular_file(p)) fail(ErrorCode::io_error, "input file " + p + " does not exist");
    report.inputs.emplace_back(p);
    return p;
  }

  fs::path output(const std::string& name) {
    report.outputs.emplace_back(name);
    return context.output_dir / name;
  }

  void write_json(const std::string& name, const json& j) {
    std::ofstream out(output(name));
    if (!out) fail(ErrorCode::io_error, "cannot write " + name);
    out << j.dump(2) << '\n';
  }

  void csv(const std::string& name, const std::vector<std::string>& header,
           const std::vector<std::vector<double>>& columns) {
    write_csv(output(name), header, columns);
  }
};

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

CrossSectionGeometry cross_section(const RunConfig& c) {
  CrossSectionGeometry g;
  g.width = c.number("geometry.width");
  g.apex_half_angle_deg = c.number("geometry.apex_half_angle");
  g.clad_index = c.number("geometry.clad_index");
  if (c.number("geometry.core_index") > 0.0) g.core_index = IndexTable::constant(c.number("geometry.core_index"));
  return g;
}

double margin_of(const RunConfig& c, const std::string& key) {
  const double m = c.number(key);
  return m > 0.0 ? m : -1.0;
}

ModeSolverOptions solver_options(const RunConfig& c) {
  ModeSolverOptions o;
  o.polarization = parse_polarization(c.text("solver.polarization"));
  return o;
}

json index_constants(const IndexTable& table) {
  json pts = json::array();
  for (const auto& [wl, n] : table.points()) pts.push_back({{"wavelength_m", wl}, {"index", n}});
  return pts;
}

void cmd_mode_solve(Run& run) {
  const auto& c = run.config;
  const CrossSectionGeometry g = cross_section(c);
  const double wl = c.number("optics.wavelength");
  double margin = margin_of(c, "solver.margin");
  if (margin < 0.0) margin = default_margin(wl);
  g.validate(wl);
  const DielectricGrid grid = rasterize_cross_section(g, wl, c.number("solver.spacing"), margin);
  run.constants["core_index"] = index_constants(g.core_index);
  const auto modes = solve_modes(grid, wl, static_cast<int>(c.integer("solver.modes")), solver_options(c));
  std::vector<double> idx, neff, beta, ratio, decayed;
  json list = json::array();
  for (std::size_t k = 0; k < modes.size(); ++k) {
    const auto& m = modes[k];
    idx.push_back(static_cast<double>(k));
    neff.push_back(m.n_eff);
    beta.push_back(m.beta() * 1e-6);
    ratio.push_back(m.boundary_ratio);
    decayed.push_back(m.decayed ? 1.0 : 0.0);
    list.push_back({{"n_eff", m.n_eff}, {"boundary_ratio", m.boundary_ratio}, {"decayed", m.decayed}});
    std::vector<double> x, y, f;
    for (int j = 0; j < m.grid.ny; ++j) {
      for (int i = 0; i < m.grid.nx; ++i) {
        x.push_back(m.grid.x(i) * 1e9);
        y.push_back(m.grid.y(j) * 1e9);
        f.push_back(m.at(i, j));
      }
    }
    run.csv("field_" + std::to_string(k) + ".csv", {"x_nm", "y_nm", "field"}, {x, y, f});
  }
  run.csv("modes.csv", {"mode", "n_eff", "beta_per_um", "boundary_ratio", "decayed"},
          {idx, neff, beta, ratio, decayed});
  run.write_json("result.json", {{"modes", list}, {"grid", {{"nx", grid.spec.nx}, {"ny", grid.spec.ny}}}});
}

void cmd_mode_sweep(Run& run) {
  const auto& c = run.config;
  const auto& widths = c.list("geometry.widths");
  if (widths.empty()) fail(ErrorCode::invalid_argument, "no widths to sweep");
  const double wl = c.number("optics.wavelength");
  ModeCountOptions opt;
  opt.spacing = c.number("solver.spacing");
  opt.margin = margin_of(c, "solver.margin");
  opt.requested = static_cast<int>(c.integer("solver.requested"));
  opt.merge_tolerance = c.number("solver.merge_tolerance");
  opt.solver = solver_options(c);
  std::vector<double> counts(widths.size());
  parallel_for(widths.size(), run.workers, [&](std::size_t k) {
    CrossSectionGeometry g;
    g.apex_half_angle_deg = c.number("geometry.apex_half_angle");
    g.clad_index = c.number("geometry.clad_index");
    if (c.number("geometry.core_index") > 0.0) g.core_index = IndexTable::constant(c.number("geometry.core_index"));
    g.width = widths[k];
    counts[k] = count_guided_modes(g, wl, opt);
  });
  std::vector<double> nm;
  json first_multi = nullptr;
  for (std::size_t k = 0; k < widths.size(); ++k) {
    nm.push_back(widths[k] * 1e9);
    if (first_multi.is_null() && counts[k] >= 2) first_multi = widths[k] * 1e9;
  }
  run.csv("mode_count.csv", {"width_nm", "guided_modes"}, {nm, counts});
  run.write_json("result.json", {{"first_multimode_width_nm", first_multi}});
}

void cmd_dipole_map(Run& run) {
  const auto& c = run.config;
  const CrossSectionGeometry g = cross_section(c);
  const double wl = c.number("optics.wavelength");
  CouplingMapOptions opt;
  opt.spacing = c.number("solver.spacing");
  opt.margin = margin_of(c, "solver.margin");
  opt.solver = solver_options(c);
  const double angle = deg_to_rad(c.number("dipole.angle"));
  const CouplingMap map = dipole_coupling_map(g, wl, {std::cos(angle), std::sin(angle)}, opt);
  run.constants["core_index"] = index_constants(g.core_index);
  std::vector<double> x, y, b, core;
  for (int j = 0; j < map.grid.ny; ++j) {
    for (int i = 0; i < map.grid.nx; ++i) {
      x.push_back(map.grid.x(i) * 1e9);
      y.push_back(map.grid.y(j) * 1e9);
      b.push_back(map.at(i, j));
      core.push_back(map.in_core(map.grid.index(i, j)) ? 1.0 : 0.0);
    }
  }
  run.csv("map.csv", {"x_nm", "y_nm", "beta", "in_core"}, {x, y, b, core});
  const double xa = map.grid.x(map.argmax_i), ya = map.grid.y(map.argmax_j);
  const double off = c.number("dipole.offset");
  const double best = map.max_value();
  run.write_json("result.json", {
      {"argmax_x_nm", xa * 1e9},
      {"depth_below_top_nm", -ya * 1e9},
      {"beta_max", best},
      {"n_eff", map.n_eff},
      {"offset_nm", off * 1e9},
      {"relative_change_deeper", map.sample(xa, ya - off) / best - 1.0},
      {"relative_change_shallower", map.sample(xa, ya + off) / best - 1.0},
  });
}

TaperProfile taper_profile(const RunConfig& c) {
  TaperProfile p;
  p.waveguide_angle_deg = c.number("taper.waveguide_angle");
  p.fiber_angle_deg = c.number("taper.fiber_angle");
  p.fiber_index = c.number("taper.fiber_index");
  p.tip_radius = c.number("taper.tip_radius");
  p.overlap = c.number("taper.overlap");
  p.gap = c.number("taper.gap");
  p.wavelength = c.number("taper.wavelength");
  p.max_width = c.number("taper.max_width");
  p.apex_half_angle_deg = c.number("taper.apex_half_angle");
  if (c.number("taper.core_index") > 0.0) p.core_index = IndexTable::constant(c.number("taper.core_index"));
  return p;
}

void cmd_taper_sweep(Run& run) {
  const auto& c = run.config;
  const TaperProfile base = taper_profile(c);
  base.validate();
  const SweepParameter param = parse_sweep_parameter(c.text("sweep.parameter"));
  const bool angular = param == SweepParameter::fiber_angle || param == SweepParameter::waveguide_angle;
  const auto& v = c.at("sweep.values");
  const Dimension want = angular ? Dimension::angle : Dimension::length;
  if (v.dimension != want) {
    fail(ErrorCode::parse_error, "'sweep.values' must be a " + std::string(dimension_name(want)) +
                                     " list for parameter " + c.text("sweep.parameter"));
  }
  SweepOptions opt;
  opt.eme.supermodes = static_cast<int>(c.integer("eme.supermodes"));
  opt.eme.spacing = c.number("eme.spacing");
  opt.eme.margin = margin_of(c, "eme.margin");
  opt.segments = static_cast<int>(c.integer("eme.segments"));
  opt.direction = c.text("sweep.direction") == "waveguide-to-fiber" ? Direction::waveguide_to_fiber
                                                                      : Direction::fiber_to_waveguide;
  opt.workers = run.workers;
  run.log("taper sweep over " + std::to_string(v.numbers.size()) + " points");
  const Curve curve = sweep_transmission(base, param, v.numbers, opt);
  run.constants["core_index"] = index_constants(base.core_index);
  const double scale = angular ? 1.0 : 1e6;
  std::vector<double> x;
  for (double value : curve.x) x.push_back(value * scale);
  const std::string column = c.text("sweep.parameter") + (angular ? "_deg" : "_um");
  std::string column_name = column;
  std::replace(column_name.begin(), column_name.end(), '-', '_');
  run.csv("transmission.csv", {column_name, "transmission"}, {x, curve.y});
  const auto best = std::max_element(curve.y.begin(), curve.y.end());
  const std::size_t kbest = static_cast<std::size_t>(best - curve.y.begin());
  const AdiabaticityReport adi = adiabaticity_check(base);
  const double threshold = c.number("sweep.threshold");
  run.write_json("result.json", {
      {"parameter", c.text("sweep.parameter")},
      {"direction", c.text("sweep.direction")},
      {"max_transmission", *best},
      {"argmax", x[kbest]},
      {"plateau_threshold", threshold},
      {"plateau_width", plateau_width(Curve{x, curve.y}, threshold)},
      {"adiabatic_base_profile", adi.adiabatic},
      {"overlap_in_wavelengths", adi.overlap_in_wavelengths},
  });
}

void cmd_eta_wfi(Run& run) {
  const auto& c = run.config;
  const double t = c.number("efficiency.transmission");
  const double k = c.number("efficiency.coupler");
  const double w = c.number("efficiency.waveguide");
  run.write_json("result.json", {{"eta_trans", t}, {"eta_coupler", k}, {"eta_wg", w},
                                 {"eta_wfi", infer_interface_efficiency(t, k, w)}});
}

GroundStateParams spin_params(Run& run) {
  const auto& c = run.config;
  GroundStateParams p;
  p.zfs = c.number("spin.zfs");
  p.xi_para = c.number("spin.xi_para");
  p.xi_perp = c.number("spin.xi_perp");
  p.gyromagnetic = c.number("spin.gyromagnetic");
  p.stark = c.number("spin.stark");
  run.constants["spin"] = {{"zfs_hz", p.zfs}, {"xi_para_hz", p.xi_para}, {"xi_perp_hz", p.xi_perp},
                           {"gyromagnetic_hz_per_t", p.gyromagnetic}, {"stark_hz_per_v_cm", p.stark}};
  return p;
}

void cmd_spin_odmr(Run& run) {
  const auto& c = run.config;
  const GroundStateParams p = spin_params(run);
  DeformationTensor u;
  u << c.number("strain.xx"), c.number("strain.xy"), c.number("strain.xz"),
      c.number("strain.xy"), c.number("strain.yy"), c.number("strain.yz"),
      c.number("strain.xz"), c.number("strain.yz"), c.number("strain.zz");
  const Eigen::Vector3d b(c.number("field.bx"), c.number("field.by"), c.number("field.bz"));
  const SpinSpectrum sp = odmr_spectrum(build_hamiltonian(p, u, b), c.number("spin.mixing_threshold"));
  std::vector<double> f, s, lo, hi, amb;
  for (const auto& t : sp.transitions) {
    f.push_back(t.frequency * 1e-6);
    s.push_back(t.strength);
    lo.push_back(t.lower);
    hi.push_back(t.upper);
    amb.push_back(t.ambiguous ? 1.0 : 0.0);
  }
  run.csv("transitions.csv", {"frequency_MHz", "strength", "lower_level", "upper_level", "ambiguous"},
          {f, s, lo, hi, amb});
  std::vector<double> level, energy, weight;
  for (int k = 0; k < 4; ++k) {
    level.push_back(k);
    energy.push_back(sp.energies(k) * 1e-6);
    weight.push_back(sp.outer_weight(k));
  }
  run.csv("levels.csv", {"level", "energy_MHz", "outer_weight"}, {level, energy, weight});
  json freqs = json::array();
  for (double v : sp.frequencies()) freqs.push_back(v * 1e-6);
  json result = {{"frequencies_MHz", freqs}, {"ambiguous", sp.ambiguous}};
  if (!c.text("table.path").empty()) {
    const auto rows = read_strain_table(run.input("table.path"));
    const auto& positions = c.list("table.positions");
    const Curve curve = positions.empty() ? odmr_vs_position(rows, p) : odmr_vs_position(rows, p, positions);
    std::vector<double> x, y;
    for (std::size_t k = 0; k < curve.x.size(); ++k) {
      x.push_back(curve.x[k] * 1e6);
      y.push_back(curve.y[k] * 1e-6);
    }
    run.csv("odmr_vs_position.csv", {"position_um", "odmr_MHz"}, {x, y});
  }
  run.write_json("result.json", result);
}

void cmd_strain_shift(Run& run) {
  const auto& c = run.config;
  const GroundStateParams p = spin_params(run);
  const StrainShift s = strain_shift(p, c.number("strain.eps_para"), c.number("strain.eps_perp"));
  run.write_json("result.json", {
      {"eps_para", c.number("strain.eps_para")},
      {"eps_perp", c.number("strain.eps_perp")},
      {"shift_MHz", s.numeric * 1e-6},
      {"closed_form_shift_MHz", s.closed_form * 1e-6},
      {"odmr_MHz", (2.0 * p.zfs + s.numeric) * 1e-6},
      {"stark_shift_Hz", stark_shift(p, c.number("stark.field"))},
  });
}

PeakFitOptions peak_options(const RunConfig& c) {
  PeakFitOptions o;
  o.reject_cosmics = c.boolean("fit.reject_cosmics");
  o.min_snr = c.number("fit.min_snr");
  return o;
}

DeformationPotentials potentials(Run& run) {
  const auto& c = run.config;
  DeformationPotentials p;
  p.a_e1 = c.number("constants.a_e1");
  p.b_e1 = c.number("constants.b_e1");
  p.a_e2 = c.number("constants.a_e2");
  p.b_e2 = c.number("constants.b_e2");
  p.a_a1 = c.number("constants.a_a1");
  p.b_a1 = c.number("constants.b_a1");
  run.constants["deformation_potentials_cm1_per_gpa"] = {
      {"a_e1", p.a_e1}, {"b_e1", p.b_e1}, {"a_e2", p.a_e2},
      {"b_e2", p.b_e2}, {"a_a1", p.a_a1}, {"b_a1", p.b_a1}};
  return p;
}

StiffnessConstants stiffness(Run& run) {
  const auto& c = run.config;
  StiffnessConstants s;
  s.c11 = c.number("constants.c11");
  s.c12 = c.number("constants.c12");
  s.c13 = c.number("constants.c13");
  s.c33 = c.number("constants.c33");
  s.validate();
  run.constants["stiffness_gpa"] = {{"c11", s.c11}, {"c12", s.c12}, {"c13", s.c13}, {"c33", s.c33}};
  return s;
}

std::array<double, 2> window_of(const RunConfig& c, const std::string& key) {
  const auto& w = c.list(key);
  if (w.size() != 2 || !(w[1] > w[0])) {
    fail(ErrorCode::parse_error, "'" + key + "' must hold two increasing wavenumbers");
  }
  return {w[0], w[1]};
}

void cmd_raman_fit(Run& run) {
  const auto& c = run.config;
  const RamanSpectrum sample = read_spectrum_csv(run.input("input.spectrum"));
  const RamanSpectrum reference = read_spectrum_csv(run.input("input.reference"));
  const DeformationPotentials pot = potentials(run);
  const StiffnessConstants stiff = stiffness(run);
  const PeakFitOptions opt = peak_options(c);
  const bool use_a1 = c.boolean("fit.use_a1");
  const RamanMode modes[3] = {RamanMode::e1_to, RamanMode::e2_to, RamanMode::a1_lo};
  const char* keys[3] = {"fit.e1_window", "fit.e2_window", "fit.a1_window"};
  ShiftTriple triple;
  triple.has_a1 = use_a1;
  std::vector<double> idx, sc, ss, rc, rs, sh, shs;
  json peaks = json::array();
  for (int k = 0; k < (use_a1 ? 3 : 2); ++k) {
    const auto w = window_of(c, keys[k]);
    PeakFit ref;
    try {
      ref = fit_peak(reference, w[0], w[1], modes[k], opt);
    } catch (const Error& e) {
      fail(ErrorCode::reference_failure, "reference " + std::string(raman_mode_name(modes[k])) + ": " + e.what());
    }
    const PeakFit fit = fit_peak(sample, w[0], w[1], modes[k], opt);
    const Shift s = shifts_from_reference(fit, ref);
    triple.value(k) = s.value;
    triple.sigma(k) = s.sigma;
    idx.push_back(k);
    sc.push_back(fit.center());
    ss.push_back(fit.sigma_center);
    rc.push_back(ref.center());
    rs.push_back(ref.sigma_center);
    sh.push_back(s.value);
    shs.push_back(s.sigma);
    peaks.push_back({{"mode", raman_mode_name(modes[k])},
                     {"center_cm1", fit.center()},
                     {"sigma_center_cm1", fit.sigma_center},
                     {"fwhm_cm1", fit.profile.total_fwhm()},
                     {"amplitude", fit.profile.amplitude},
                     {"rejected_points", fit.rejected_points},
                     {"reference_center_cm1", ref.center()},
                     {"shift_cm1", s.value},
                     {"sigma_shift_cm1", s.sigma}});
  }
  run.csv("peaks.csv",
          {"mode_index", "center_cm1", "sigma_center_cm1", "reference_center_cm1",
           "sigma_reference_cm1", "shift_cm1", "sigma_shift_cm1"},
          {idx, sc, ss, rc, rs, sh, shs});
  const StressSolution stress = shifts_to_stress(triple, pot);
  const StrainState strain = stress_to_strain(stress.stress, stiff);
  run.write_json("result.json", {
      {"peaks", peaks},
      {"two_peak", stress.two_peak},
      {"stress_gpa", {{"para", stress.stress.para}, {"perp", stress.stress.perp},
                      {"sigma_para", stress.stress.sigma_para}, {"sigma_perp", stress.stress.sigma_perp}}},
      {"strain", {{"para", strain.para}, {"perp", strain.perp},
                  {"sigma_para", strain.sigma_para}, {"sigma_perp", strain.sigma_perp}}},
  });
}

void cmd_raman_map(Run& run) {
  const auto& c = run.config;
  const auto spectra = read_positioned_spectra(run.input("input.spectra"));
  const RamanSpectrum reference = read_spectrum_csv(run.input("input.reference"));
  StrainMapOptions opt;
  opt.fit = peak_options(c);
  opt.potentials = potentials(run);
  opt.stiffness = stiffness(run);
  opt.use_a1 = c.boolean("fit.use_a1");
  opt.workers = run.workers;
  const StrainMap map = build_strain_map(spectra, reference, opt);
  std::vector<std::vector<double>> cols(8);
  for (std::size_t r = 0; r < map.y.size(); ++r) {
    for (std::size_t q = 0; q < map.x.size(); ++q) {
      const auto i = static_cast<Eigen::Index>(r), j = static_cast<Eigen::Index>(q);
      cols[0].push_back(map.x[q]);
      cols[1].push_back(map.y[r]);
      cols[2].push_back(map.eps_para(i, j));
      cols[3].push_back(map.eps_perp(i, j));
      cols[4].push_back(map.sigma_eps_para(i, j));
      cols[5].push_back(map.sigma_eps_perp(i, j));
      cols[6].push_back(map.stress_para(i, j));
      cols[7].push_back(map.stress_perp(i, j));
    }
  }
  run.csv("strain_map.csv",
          {"x_um", "y_um", "eps_para", "eps_perp", "sigma_eps_para", "sigma_eps_perp",
           "stress_para_GPa", "stress_perp_GPa"},
          cols);
  run.write_json("result.json", {{"nx", map.x.size()}, {"ny", map.y.size()},
                                 {"spectra", spectra.size()}, {"failed_fits", map.failed}});
}

TimeTagStream read_tags(Run& run) {
  const fs::path p = run.input("input.tags");
  const std::string& fmt = run.config.text("input.format");
  const bool csv = fmt == "csv" || (fmt == "auto" && p.extension() == ".csv");
  return csv ? read_time_tags_csv(p) : read_time_tags_binary(p);
}

void cmd_g2(Run& run) {
  const auto& c = run.config;
  TimeTagStream stream = read_tags(run);
  const double period_ps = c.number("pulsed.rep_period") * 1e12;
  const double gate_end = c.number("gate.end") * 1e12;
  if (gate_end > 0.0) {
    if (!(period_ps > 0.0)) fail(ErrorCode::invalid_argument, "a time gate needs pulsed.rep_period");
    stream = time_gate(stream, period_ps, c.number("gate.start") * 1e12, gate_end,
                       c.number("gate.offset") * 1e12);
  }
  CorrelateOptions opt;
  opt.window_ps = std::llround(c.number("correlation.window") * 1e12);
  opt.bin_ps = std::llround(c.number("correlation.bin") * 1e12);
  opt.normalization = parse_normalization(c.text("correlation.normalization"));
  opt.long_delay_fraction = c.number("correlation.long_delay_fraction");
  const auto a = static_cast<std::uint8_t>(c.integer("correlation.channel_a"));
  const auto b = static_cast<std::uint8_t>(c.integer("correlation.channel_b"));
  CorrelationHistogram h = correlate(stream, a, b, opt);
  std::vector<double> delay, counts;
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    delay.push_back(h.center(k) * 1e-3);
    counts.push_back(static_cast<double>(h.counts[k]));
  }
  run.csv("g2.csv", {"delay_ns", "coincidences", "g2"}, {delay, counts, h.g2});
  json result = {{"events_a", stream.count(a)},
                 {"events_b", stream.count(b)},
                 {"normalization", normalization_name(h.normalization)},
                 {"norm", h.norm}};
  if (period_ps > 0.0) {
    h.rep_period_ps = period_ps;
    const PulsedEnvelope env = pulsed_g2_envelope(h, period_ps, static_cast<int>(c.integer("pulsed.exclude_nearest")));
    std::vector<double> k, d, area;
    for (std::size_t i = 0; i < env.peak.size(); ++i) {
      k.push_back(env.peak[i]);
      d.push_back(env.peak[i] * period_ps * 1e-3);
      area.push_back(env.area[i]);
    }
    run.csv("envelope.csv", {"peak", "delay_ns", "area"}, {k, d, area});
    result["g2_zero"] = env.g2_zero;
    result["sigma_g2_zero"] = env.sigma_g2_zero;
    result["side_peaks"] = env.side_peaks;
  }
  run.write_json("result.json", result);
}

/// Two-column trace with the x column scaled into canonical units.
std::pair<std::vector<double>, std::vector<double>> read_trace(Run& run, double x_scale) {
  const NumericTable t = read_numeric_csv(run.input("input.data"));
  if (t.columns.size() < 2) fail(ErrorCode::io_error, "trace needs two columns");
  std::vector<double> x = t.columns[0];
  for (double& v : x) v *= x_scale;
  return {x, t.columns[1]};
}

json fit_json(const FitResult& f) {
  json params = json::object();
  for (std::size_t k = 0; k < f.names.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    params[f.names[k]] = {{"value", finite_or_null(f.values(i))}, {"sigma", finite_or_null(f.sigmas(i))}};
  }
  return {{"model", f.model}, {"parameters", params}, {"residual_norm", f.residual_norm},
          {"dof", f.dof}, {"converged", f.converged}, {"flags", f.flags}};
}

void write_fit(Run& run, const FitResult& f, const std::vector<double>& x, const std::vector<double>& y,
               const std::function<double(double)>& model, const std::vector<std::string>& header) {
  std::vector<double> m;
  for (double v : x) m.push_back(model(v));
  run.csv("fit.csv", header, {x, y, m});
  run.write_json("result.json", fit_json(f));
}

void cmd_fit_saturation(Run& run) {
  const auto& c = run.config;
  const auto [p, y] = read_trace(run, 1.0);
  SaturationOptions opt;
  opt.model = parse_saturation_model(c.text("fit.model"));
  opt.background = parse_background_mode(c.text("fit.background"));
  opt.background_slope = c.number("fit.background_slope");
  const double rep = c.number("fit.rep_rate");
  const FitResult f = fit_saturation(p, y, rep, opt);
  const SaturationModel m = opt.model == SaturationModel::automatic ? select_saturation_model(rep) : opt.model;
  const double i_s = f.value("I_s"), p_s = f.value("P_s");
  const double slope = opt.background == BackgroundMode::fit ? f.value("b")
                       : opt.background == BackgroundMode::subtract ? opt.background_slope : 0.0;
  write_fit(run, f, p, y, [&](double v) { return saturation_curve(m, i_s, p_s, v) + slope * v; },
            {"power", "rate_cps", "model_cps"});
}

void cmd_fit_odmr(Run& run) {
  const auto [f, y] = read_trace(run, run.config.number("input.x_unit"));
  const FitResult r = fit_odmr(f, y);
  const double c0 = r.value("center"), w = r.value("fwhm"), a = r.value("contrast"), o = r.value("offset");
  write_fit(run, r, f, y, [&](double v) { const double u = (v - c0) / w; return o + a / (1.0 + 4.0 * u * u); },
            {"frequency_Hz", "signal", "model"});
}

void cmd_fit_rabi(Run& run) {
  const auto [t, y] = read_trace(run, run.config.number("input.x_unit"));
  const FitResult r = fit_rabi(t, y);
  const double a = r.value("amplitude"), f = r.value("frequency"), ph = r.value("phase");
  const double tau = r.value("tau"), o = r.value("offset"), t0 = t.front();
  write_fit(run, r, t, y, [&](double v) {
    const double e = std::isinf(tau) ? 1.0 : std::exp(-(v - t0) / tau);
    return o + a * std::cos(2.0 * kPi * f * (v - t0) + ph) * e;
  }, {"time_s", "signal", "model"});
}

void cmd_fit_echo(Run& run) {
  const auto [t, y] = read_trace(run, run.config.number("input.x_unit"));
  const bool stretch = run.config.boolean("fit.free_stretch");
  const FitResult r = fit_hahn_echo(t, y, stretch);
  const double a = r.value("amplitude"), t2 = r.value("T2"), o = r.value("offset");
  const double n = stretch ? r.value("n") : 1.0;
  write_fit(run, r, t, y, [&](double v) { return o + a * std::exp(-std::pow(v / t2, n)); },
            {"delay_s", "signal", "model"});
}

void cmd_simulate_emitter(Run& run) {
  const auto& c = run.config;
  EmitterParams p;
  p.lifetime = c.number("emitter.lifetime");
  p.isc_probability = c.number("emitter.isc_probability");
  p.metastable_lifetime = c.number("emitter.metastable_lifetime");
  p.collection_efficiency = c.number("emitter.collection_efficiency");
  p.pulsed = c.text("emitter.excitation") == "pulsed";
  p.rep_rate = c.number("emitter.rep_rate");
  p.excitation_probability = c.number("emitter.excitation_probability");
  p.pump_rate = c.number("emitter.pump_rate");
  p.duration = c.number("emitter.duration");
  p.emitter = c.boolean("emitter.enabled");
  p.g2_target = c.number("background.g2_target");
  p.background_rate = c.number("background.rate");
  p.background_lifetime = c.number("background.lifetime");
  p.jitter = c.number("detector.jitter");
  p.seed = static_cast<std::uint64_t>(c.integer("run.seed"));
  const TimeTagStream s = simulate_emitter(p);
  const std::string& fmt = c.text("output.format");
  if (fmt == "binary" || fmt == "both") write_time_tags_binary(s, run.output("tags.bin"));
  if (fmt == "csv" || fmt == "both") write_time_tags_csv(s, run.output("tags.csv"));
  std::size_t emitted = 0;
  for (auto src : s.source) emitted += src == static_cast<std::uint8_t>(EventSource::emitter);
  const double signal = emitted / p.duration;
  const double background = (s.events.size() - emitted) / p.duration;
  const SnrDefinition def = c.text("analysis.snr_definition") == "ratio" ? SnrDefinition::ratio
                                                                         : SnrDefinition::shot_noise;
  json result = {{"events", s.events.size()},
                 {"channel_0", s.count(0)},
                 {"channel_1", s.count(1)},
                 {"signal_cps", signal},
                 {"background_cps", background},
                 {"seed", p.seed}};
  result["snr"] = def == SnrDefinition::ratio && background == 0.0 ? json(nullptr)
                                                                   : json(snr(signal, background, def));
  run.write_json("result.json", result);
}

using Handler = std::function<void(Run&)>;

const std::map<std::string, Handler, std::less<>>& handlers() {
  static const std::map<std::string, Handler, std::less<>> h = {
      {"mode-solve", cmd_mode_solve},       {"mode-sweep", cmd_mode_sweep},
      {"dipole-map", cmd_dipole_map},       {"taper-sweep", cmd_taper_sweep},
      {"eta-wfi", cmd_eta_wfi},             {"spin-odmr", cmd_spin_odmr},
      {"strain-shift", cmd_strain_shift},   {"raman-fit", cmd_raman_fit},
      {"raman-map", cmd_raman_map},         {"g2", cmd_g2},
      {"fit-saturation", cmd_fit_saturation}, {"fit-odmr", cmd_fit_odmr},
      {"fit-rabi", cmd_fit_rabi},           {"fit-echo", cmd_fit_echo},
      {"simulate-emitter", cmd_simulate_emitter},
  };
  return h;
}

json config_json(const RunConfig& c) {
  json out = json::object();
  for (const auto& [name, v] : c.values) {
    json entry = {{"text", v.text}, {"provenance", provenance_name(v.provenance)}};
    if (v.line > 0) entry["line"] = v.line;
    if (v.kind == ValueKind::text || v.kind == ValueKind::choice) {
      entry["value"] = v.word;
    } else if (v.kind == ValueKind::quantity_list) {
      entry["value"] = v.numbers;
    } else if (!v.numbers.empty()) {
      entry["value"] = v.numbers.front();
    }
    if (!canonical_unit(v.dimension).empty()) entry["unit"] = canonical_unit(v.dimension);
    out[name] = entry;
  }
  return out;
}

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[md[k] >> 4];
    out += hex[md[k] & 15];
  }
  return out;
}

fs::path resolve_output_dir(const std::string& flag, const RunConfig& config) {
  if (!flag.empty()) return flag;
  if (!config.text("run.output").empty()) return config.text("run.output");
  if (const char* root = std::getenv("SICWFI_OUTPUT_ROOT"); root && *root) {
    return fs::path(root) / config.command;
  }
  return fs::path("sicwfi-out") / config.command;
}

int resolve_workers(const RunConfig& config) {
  const long long w = config.integer("run.workers");
  if (w > 0) return static_cast<int>(w);
  return std::max(1u, std::thread::hardware_concurrency());
}

RunReport run_command(const RunConfig& config, const RunContext& context) {
  const auto it = handlers().find(config.command);
  if (it == handlers().end()) fail(ErrorCode::unknown_command, "unknown command '" + config.command + "'");
  std::error_code ec;
  fs::create_directories(context.output_dir, ec);
  if (ec) fail(ErrorCode::io_error, "cannot create " + context.output_dir.string() + ": " + ec.message());

  Run run{config, context, 1, {}, json::object()};
  run.workers = resolve_workers(config);
  const auto start = std::chrono::steady_clock::now();
  it->second(run);
  run.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  {
    std::ofstream out(run.output("config.resolved"));
    out << config.to_text();
  }
  json inputs = json::array(), outputs = json::array();
  for (const auto& p : run.report.inputs) inputs.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  for (const auto& p : run.report.outputs) {
    outputs.push_back({{"path", p.string()}, {"sha256", sha256_file(context.output_dir / p)}});
  }
  const json manifest = {
      {"command", config.command},
      {"software", {{"name", "sicwfi"}, {"version", software_version()}}},
      {"config", config_json(config)},
      {"constants", run.constants},
      {"inputs", inputs},
      {"outputs", outputs},
      {"timing", {{"wall_seconds", run.report.seconds}, {"workers", run.workers}}},
  };
  std::ofstream out(context.output_dir / "manifest.json");
  if (!out) fail(ErrorCode::io_error, "cannot write manifest.json");
  out << manifest.dump(2) << '\n';
  return run.report;
}

}  // namespace sicwfi
