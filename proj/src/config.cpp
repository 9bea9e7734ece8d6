#include "sicwfi/config.hpp"

#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "sicwfi/constants.hpp"
#include "sicwfi/error.hpp"

namespace sicwfi {

std::string_view dimension_name(Dimension d) {
  switch (d) {
    case Dimension::none: return "dimensionless";
    case Dimension::length: return "length";
    case Dimension::angle: return "angle";
    case Dimension::frequency: return "frequency";
    case Dimension::time: return "time";
    case Dimension::rate: return "count rate";
    case Dimension::stress: return "stress";
    case Dimension::electric_field: return "electric field";
    case Dimension::magnetic_field: return "magnetic field";
    case Dimension::wavenumber: return "wavenumber";
    case Dimension::gyromagnetic: return "gyromagnetic ratio";
    case Dimension::stark: return "Stark coefficient";
    case Dimension::phonon_shift: return "phonon deformation potential";
  }
  return "dimensionless";
}

std::string_view canonical_unit(Dimension d) {
  switch (d) {
    case Dimension::none: return "";
    case Dimension::length: return "m";
    case Dimension::angle: return "deg";
    case Dimension::frequency: return "Hz";
    case Dimension::time: return "s";
    case Dimension::rate: return "cps";
    case Dimension::stress: return "GPa";
    case Dimension::electric_field: return "V/cm";
    case Dimension::magnetic_field: return "T";
    case Dimension::wavenumber: return "cm-1";
    case Dimension::gyromagnetic: return "Hz/T";
    case Dimension::stark: return "Hz/(V/cm)";
    case Dimension::phonon_shift: return "cm-1/GPa";
  }
  return "";
}

namespace {

struct UnitEntry {
  std::string_view name;
  Dimension dim;
  double scale;
};

constexpr UnitEntry kUnits[] = {
    {"m", Dimension::length, 1.0},
    {"mm", Dimension::length, 1e-3},
    {"um", Dimension::length, 1e-6},
    {"µm", Dimension::length, 1e-6},
    {"nm", Dimension::length, 1e-9},
    {"pm", Dimension::length, 1e-12},
    {"deg", Dimension::angle, 1.0},
    {"rad", Dimension::angle, 180.0 / kPi},
    {"mrad", Dimension::angle, 0.18 / kPi},
    {"Hz", Dimension::frequency, 1.0},
    {"kHz", Dimension::frequency, 1e3},
    {"MHz", Dimension::frequency, 1e6},
    {"GHz", Dimension::frequency, 1e9},
    {"s", Dimension::time, 1.0},
    {"ms", Dimension::time, 1e-3},
    {"us", Dimension::time, 1e-6},
    {"µs", Dimension::time, 1e-6},
    {"ns", Dimension::time, 1e-9},
    {"ps", Dimension::time, 1e-12},
    {"cps", Dimension::rate, 1.0},
    {"kcps", Dimension::rate, 1e3},
    {"Mcps", Dimension::rate, 1e6},
    {"Pa", Dimension::stress, 1e-9},
    {"MPa", Dimension::stress, 1e-3},
    {"GPa", Dimension::stress, 1.0},
    {"V/cm", Dimension::electric_field, 1.0},
    {"kV/cm", Dimension::electric_field, 1e3},
    {"V/m", Dimension::electric_field, 1e-2},
    {"MV/m", Dimension::electric_field, 1e4},
    {"T", Dimension::magnetic_field, 1.0},
    {"mT", Dimension::magnetic_field, 1e-3},
    {"uT", Dimension::magnetic_field, 1e-6},
    {"G", Dimension::magnetic_field, 1e-4},
    {"cm-1", Dimension::wavenumber, 1.0},
    {"cm^-1", Dimension::wavenumber, 1.0},
    {"1/cm", Dimension::wavenumber, 1.0},
    {"Hz/T", Dimension::gyromagnetic, 1.0},
    {"MHz/T", Dimension::gyromagnetic, 1e6},
    {"GHz/T", Dimension::gyromagnetic, 1e9},
    {"MHz/mT", Dimension::gyromagnetic, 1e9},
    {"Hz/(V/cm)", Dimension::stark, 1.0},
    {"kHz/(kV/cm)", Dimension::stark, 1.0},
    {"cm-1/GPa", Dimension::phonon_shift, 1.0},
    {"cm^-1/GPa", Dimension::phonon_shift, 1.0},
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void parse_fail(int line, const std::string& msg) {
  fail(ErrorCode::parse_error, line > 0 ? "line " + std::to_string(line) + ": " + msg : msg);
}

std::string format_range(const KeySpec& spec) {
  std::ostringstream out;
  out << "[" << spec.min << ", " << spec.max << "]";
  if (!canonical_unit(spec.dimension).empty()) out << " " << canonical_unit(spec.dimension);
  return out.str();
}

double parse_plain_number(std::string_view s, const KeySpec& spec, int line) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    parse_fail(line, "'" + spec.name() + "' expects a plain number, got '" + std::string(s) + "'");
  }
  return v;
}

/// A number followed by a unit, canonicalized; the dimension is checked
/// against `want` unless `want` is none (any dimension, returned via `got`).
double parse_quantity(std::string_view s, Dimension want, Dimension& got, const KeySpec& spec,
                      int line) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || !std::isfinite(v)) {
    parse_fail(line, "'" + spec.name() + "' expects a quantity with unit, got '" + std::string(s) + "'");
  }
  const std::string_view unit = trim(s.substr(static_cast<std::size_t>(ptr - s.data())));
  if (unit.empty()) {
    parse_fail(line, "missing unit for '" + spec.name() + "' (expected a " +
                         std::string(dimension_name(want == Dimension::none ? got : want)) +
                         " such as " + std::string(canonical_unit(want)) + ")");
  }
  Dimension dim = Dimension::none;
  double scale = 0.0;
  try {
    scale = unit_scale(unit, dim);
  } catch (const Error& e) {
    parse_fail(line, "'" + spec.name() + "': " + e.what());
  }
  if (want != Dimension::none && dim != want) {
    parse_fail(line, "'" + spec.name() + "' expects a " + std::string(dimension_name(want)) +
                         ", unit '" + std::string(unit) + "' is a " +
                         std::string(dimension_name(dim)));
  }
  if (want == Dimension::none && got != Dimension::none && dim != got) {
    parse_fail(line, "'" + spec.name() + "' mixes " + std::string(dimension_name(got)) + " and " +
                         std::string(dimension_name(dim)));
  }
  got = dim;
  return v * scale;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto k = s.find(sep, start);
    parts.push_back(trim(s.substr(start, k == std::string_view::npos ? std::string_view::npos : k - start)));
    if (k == std::string_view::npos) break;
    start = k + 1;
  }
  return parts;
}

void check_range(double v, const KeySpec& spec, int line) {
  if (v < spec.min || v > spec.max) {
    std::ostringstream msg;
    msg << "value " << v << " " << canonical_unit(spec.dimension) << " for '" << spec.name()
        << "' is out of range " << format_range(spec);
    parse_fail(line, msg.str());
  }
}

ConfigValue parse_value(std::string_view raw, const KeySpec& spec, int line, Provenance prov) {
  ConfigValue v;
  v.kind = spec.kind;
  v.dimension = spec.dimension;
  v.provenance = prov;
  v.line = line;
  std::string_view s = trim(raw);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  v.text = std::string(s);
  switch (spec.kind) {
    case ValueKind::quantity: {
      Dimension got = Dimension::none;
      v.numbers = {parse_quantity(s, spec.dimension, got, spec, line)};
      break;
    }
    case ValueKind::number:
      v.numbers = {parse_plain_number(s, spec, line)};
      break;
    case ValueKind::integer: {
      long long n = 0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
      if (ec != std::errc() || ptr != s.data() + s.size()) {
        parse_fail(line, "'" + spec.name() + "' expects an integer, got '" + std::string(s) + "'");
      }
      v.numbers = {static_cast<double>(n)};
      break;
    }
    case ValueKind::boolean:
      if (s == "true" || s == "yes" || s == "on") {
        v.numbers = {1.0};
      } else if (s == "false" || s == "no" || s == "off") {
        v.numbers = {0.0};
      } else {
        parse_fail(line, "'" + spec.name() + "' expects true or false, got '" + std::string(s) + "'");
      }
      break;
    case ValueKind::text:
      v.word = std::string(s);
      break;
    case ValueKind::choice: {
      bool ok = false;
      for (const auto& c : spec.choices) ok = ok || c == s;
      if (!ok) {
        std::string all;
        for (const auto& c : spec.choices) all += (all.empty() ? "" : ", ") + c;
        parse_fail(line, "'" + spec.name() + "' must be one of {" + all + "}, got '" + std::string(s) + "'");
      }
      v.word = std::string(s);
      break;
    }
    case ValueKind::quantity_list: {
      Dimension got = spec.dimension;
      if (s.empty()) break;
      if (s.front() == '[') {
        if (s.back() != ']') parse_fail(line, "unterminated list for '" + spec.name() + "'");
        s = trim(s.substr(1, s.size() - 2));
      }
      const auto range = split(s, ':');
      if (range.size() == 3) {
        const double a = parse_quantity(range[0], spec.dimension, got, spec, line);
        const double b = parse_quantity(range[1], spec.dimension, got, spec, line);
        const double step = parse_quantity(range[2], spec.dimension, got, spec, line);
        if (!(step != 0.0) || (b - a) / step < 0.0) {
          parse_fail(line, "range for '" + spec.name() + "' has a step that does not reach its end");
        }
        const double n = std::floor((b - a) / step + 1e-9) + 1.0;
        if (n > 1e5) parse_fail(line, "range for '" + spec.name() + "' has more than 100000 points");
        for (int k = 0; k < static_cast<int>(n); ++k) v.numbers.push_back(a + k * step);
      } else if (range.size() == 1) {
        for (auto part : split(s, ',')) {
          if (part.empty()) parse_fail(line, "empty list entry for '" + spec.name() + "'");
          v.numbers.push_back(parse_quantity(part, spec.dimension, got, spec, line));
        }
      } else {
        parse_fail(line, "'" + spec.name() + "' ranges are written start:stop:step");
      }
      v.dimension = got;
      break;
    }
  }
  if (spec.kind == ValueKind::quantity || spec.kind == ValueKind::number ||
      spec.kind == ValueKind::integer || spec.kind == ValueKind::quantity_list) {
    for (double x : v.numbers) check_range(x, spec, line);
  }
  return v;
}

// Schema construction helpers.
KeySpec quantity(std::string section, std::string key, Dimension dim, std::string def, double lo,
                 double hi, std::string help) {
  return {std::move(section), std::move(key), ValueKind::quantity, dim, std::move(def), lo, hi, {},
          std::move(help)};
}

KeySpec number(std::string section, std::string key, std::string def, double lo, double hi,
               std::string help) {
  return {std::move(section), std::move(key), ValueKind::number, Dimension::none, std::move(def), lo,
          hi, {}, std::move(help)};
}

KeySpec integer(std::string section, std::string key, std::string def, double lo, double hi,
                std::string help) {
  return {std::move(section), std::move(key), ValueKind::integer, Dimension::none, std::move(def), lo,
          hi, {}, std::move(help)};
}

KeySpec boolean(std::string section, std::string key, std::string def, std::string help) {
  return {std::move(section), std::move(key), ValueKind::boolean, Dimension::none, std::move(def), 0,
          1, {}, std::move(help)};
}

KeySpec text(std::string section, std::string key, std::string def, std::string help) {
  return {std::move(section), std::move(key), ValueKind::text, Dimension::none, std::move(def), 0, 0,
          {}, std::move(help)};
}

KeySpec choice(std::string section, std::string key, std::string def,
               std::vector<std::string> options, std::string help) {
  return {std::move(section), std::move(key), ValueKind::choice, Dimension::none, std::move(def), 0,
          0, std::move(options), std::move(help)};
}

KeySpec qlist(std::string section, std::string key, Dimension dim, std::string def, double lo,
              double hi, std::string help) {
  return {std::move(section), std::move(key), ValueKind::quantity_list, dim, std::move(def), lo, hi,
          {}, std::move(help)};
}

using Schema = std::vector<KeySpec>;

void append(Schema& s, const Schema& more) { s.insert(s.end(), more.begin(), more.end()); }

Schema run_keys() {
  return {
      integer("run", "seed", "1", 0, 9.2e18, "random seed for Monte-Carlo commands"),
      integer("run", "workers", "0", 0, 4096, "worker threads, 0 = all cores"),
      text("run", "output", "", "output directory (overridden by --output)"),
  };
}

Schema cross_section_keys() {
  return {
      quantity("geometry", "width", Dimension::length, "490nm", 1e-9, 20e-6, "top-face width"),
      quantity("geometry", "apex_half_angle", Dimension::angle, "36deg", 1, 89, "half-opening angle at the apex"),
      number("geometry", "clad_index", "1.0", 1.0, 4.0, "cladding refractive index"),
      number("geometry", "core_index", "0", 0, 5.0, "constant core index, 0 = tabulated 4H-SiC"),
      quantity("optics", "wavelength", Dimension::length, "960nm", 200e-9, 5e-6, "vacuum wavelength"),
      quantity("solver", "spacing", Dimension::length, "10nm", 0.5e-9, 200e-9, "grid spacing"),
      quantity("solver", "margin", Dimension::length, "0nm", 0, 20e-6, "cladding margin, 0 = one wavelength"),
      choice("solver", "polarization", "quasi-tm", {"scalar", "quasi-te", "quasi-tm"}, "field model"),
  };
}

Schema taper_keys() {
  return {
      quantity("taper", "waveguide_angle", Dimension::angle, "2deg", 0.01, 45, "full opening angle of the beam taper"),
      quantity("taper", "fiber_angle", Dimension::angle, "1.95deg", 0.01, 45, "full opening angle of the fiber cone"),
      number("taper", "fiber_index", "1.45", 1.0, 4.0, "fiber refractive index"),
      quantity("taper", "tip_radius", Dimension::length, "0nm", 0, 5e-6, "fiber tip radius, 0 = ideal tip"),
      quantity("taper", "overlap", Dimension::length, "15um", 0, 1e-3, "waveguide-fiber overlap length"),
      quantity("taper", "gap", Dimension::length, "0nm", 0, 5e-6, "fiber surface to top face"),
      quantity("taper", "wavelength", Dimension::length, "960nm", 200e-9, 5e-6, "vacuum wavelength"),
      quantity("taper", "max_width", Dimension::length, "490nm", 10e-9, 20e-6, "beam width after the taper"),
      quantity("taper", "apex_half_angle", Dimension::angle, "36deg", 1, 89, "beam apex half-angle"),
      number("taper", "core_index", "0", 0, 5.0, "constant core index, 0 = tabulated 4H-SiC"),
      integer("eme", "segments", "0", 0, 100000, "segments per stack, 0 = 4 per wavelength of overlap"),
      integer("eme", "supermodes", "4", 1, 64, "local supermodes per section"),
      quantity("eme", "spacing", Dimension::length, "20nm", 1e-9, 200e-9, "grid spacing"),
      quantity("eme", "margin", Dimension::length, "0nm", 0, 20e-6, "cladding margin, 0 = one wavelength"),
  };
}

Schema spin_constant_keys() {
  return {
      quantity("spin", "zfs", Dimension::frequency, "35MHz", 1, 1e12, "zero-field splitting D"),
      quantity("spin", "xi_para", Dimension::frequency, "2.8GHz", -1e13, 1e13, "spin-strain coupling, c axis"),
      quantity("spin", "xi_perp", Dimension::frequency, "-1.9GHz", -1e13, 1e13, "spin-strain coupling, basal plane"),
      quantity("spin", "gyromagnetic", Dimension::gyromagnetic, "28GHz/T", 0, 1e12, "electron gyromagnetic ratio"),
      quantity("spin", "stark", Dimension::stark, "13Hz/(V/cm)", -1e9, 1e9, "linear Stark coefficient"),
  };
}

Schema raman_keys() {
  return {
      qlist("fit", "e1_window", Dimension::wavenumber, "[788cm-1, 808cm-1]", 0, 5000, "E1(TO) fit window"),
      qlist("fit", "e2_window", Dimension::wavenumber, "[765cm-1, 787cm-1]", 0, 5000, "E2(TO) fit window"),
      qlist("fit", "a1_window", Dimension::wavenumber, "[945cm-1, 985cm-1]", 0, 5000, "A1(LO) fit window"),
      boolean("fit", "use_a1", "true", "include the A1(LO) line in the stress solve"),
      boolean("fit", "reject_cosmics", "true", "mask cosmic-ray spikes before fitting"),
      number("fit", "min_snr", "3", 0, 1e6, "minimum peak amplitude over residual noise"),
      quantity("constants", "a_e1", Dimension::phonon_shift, "-2.06cm-1/GPa", -100, 100, ""),
      quantity("constants", "b_e1", Dimension::phonon_shift, "-0.43cm-1/GPa", -100, 100, ""),
      quantity("constants", "a_e2", Dimension::phonon_shift, "-1.55cm-1/GPa", -100, 100, ""),
      quantity("constants", "b_e2", Dimension::phonon_shift, "-0.74cm-1/GPa", -100, 100, ""),
      quantity("constants", "a_a1", Dimension::phonon_shift, "-1.124cm-1/GPa", -100, 100, ""),
      quantity("constants", "b_a1", Dimension::phonon_shift, "-0.651cm-1/GPa", -100, 100, ""),
      quantity("constants", "c11", Dimension::stress, "501GPa", 1, 5000, ""),
      quantity("constants", "c12", Dimension::stress, "111GPa", 0, 5000, ""),
      quantity("constants", "c13", Dimension::stress, "52GPa", 0, 5000, ""),
      quantity("constants", "c33", Dimension::stress, "553GPa", 1, 5000, ""),
  };
}

std::map<std::string, Schema, std::less<>> build_schemas() {
  std::map<std::string, Schema, std::less<>> all;

  Schema s = cross_section_keys();
  s.push_back(integer("solver", "modes", "4", 1, 50, "modes requested"));
  all["mode-solve"] = s;

  s = cross_section_keys();
  s.erase(s.begin());
  s.push_back(qlist("geometry", "widths", Dimension::length, "400nm:700nm:20nm", 1e-9, 20e-6, "widths to scan"));
  s.push_back(integer("solver", "requested", "6", 1, 50, "modes requested per width"));
  s.push_back(number("solver", "merge_tolerance", "1e-4", 0, 1, "n_eff distance merged into one family"));
  all["mode-sweep"] = s;

  s = cross_section_keys();
  s.push_back(quantity("dipole", "angle", Dimension::angle, "90deg", -180, 180, "dipole angle from the x axis"));
  s.push_back(quantity("dipole", "offset", Dimension::length, "50nm", 0, 1e-6, "vertical offset for the sensitivity report"));
  all["dipole-map"] = s;

  s = taper_keys();
  s.push_back(choice("sweep", "parameter", "overlap",
                     {"overlap", "fiber-angle", "tip-radius", "wavelength", "waveguide-angle"},
                     "swept profile parameter"));
  s.push_back(qlist("sweep", "values", Dimension::none, "5um:40um:5um", 0, 1e300, "sweep values with units"));
  s.push_back(choice("sweep", "direction", "waveguide-to-fiber", {"waveguide-to-fiber", "fiber-to-waveguide"}, ""));
  s.push_back(number("sweep", "threshold", "0.8", 0, 1, "transmission level for the plateau width"));
  all["taper-sweep"] = s;

  all["eta-wfi"] = {
      number("efficiency", "transmission", "0.7744", 1e-12, 1, "measured double-sided transmission"),
      number("efficiency", "coupler", "0.9", 1e-12, 1, "grating/objective coupler efficiency"),
      number("efficiency", "waveguide", "0.98", 1e-12, 1, "waveguide propagation efficiency"),
  };

  s = spin_constant_keys();
  for (const char* c : {"xx", "yy", "zz", "xy", "xz", "yz"}) {
    s.push_back(number("strain", c, "0", -0.05, 0.05, "strain tensor component"));
  }
  for (const char* c : {"bx", "by", "bz"}) {
    s.push_back(quantity("field", c, Dimension::magnetic_field, "0T", -20, 20, "magnetic field component"));
  }
  s.push_back(number("spin", "mixing_threshold", "0.45", 0, 0.5, "minority weight that flags a transition"));
  s.push_back(text("table", "path", "", "CSV strain table (position_um, eps_para, eps_perp)"));
  s.push_back(qlist("table", "positions", Dimension::length, "", -1, 1, "evaluation positions, empty = table rows"));
  all["spin-odmr"] = s;

  s = spin_constant_keys();
  s.push_back(number("strain", "eps_para", "0.001", -0.05, 0.05, "strain along c"));
  s.push_back(number("strain", "eps_perp", "-0.0035", -0.05, 0.05, "basal-plane strain"));
  s.push_back(quantity("stark", "field", Dimension::electric_field, "0V/cm", 0, 1e8, "applied electric field"));
  all["strain-shift"] = s;

  s = {text("input", "spectrum", "", "sample spectrum CSV"),
       text("input", "reference", "", "unstrained reference spectrum CSV")};
  append(s, raman_keys());
  all["raman-fit"] = s;

  s = {text("input", "spectra", "", "positioned spectra CSV (x_um, y_um, wavenumber_cm1, counts)"),
       text("input", "reference", "", "unstrained reference spectrum CSV")};
  append(s, raman_keys());
  all["raman-map"] = s;

  all["g2"] = {
      text("input", "tags", "", "time-tag file"),
      choice("input", "format", "auto", {"auto", "binary", "csv"}, "auto: by extension (.csv or binary)"),
      integer("correlation", "channel_a", "0", 0, 255, ""),
      integer("correlation", "channel_b", "1", 0, 255, ""),
      quantity("correlation", "window", Dimension::time, "200ns", 1e-12, 1, "histogram half-range"),
      quantity("correlation", "bin", Dimension::time, "1ns", 1e-12, 1, "bin width"),
      choice("correlation", "normalization", "raw", {"raw", "long-delay", "poisson"}, ""),
      number("correlation", "long_delay_fraction", "0.2", 0.01, 0.5, "outer share of bins used by long-delay"),
      quantity("pulsed", "rep_period", Dimension::time, "0ns", 0, 1, "repetition period, 0 = cw analysis"),
      integer("pulsed", "exclude_nearest", "2", 0, 1000, "side peaks next to zero left out of the mean"),
      quantity("gate", "start", Dimension::time, "0ns", 0, 1, ""),
      quantity("gate", "end", Dimension::time, "0ns", 0, 1, "0 = no time gate"),
      quantity("gate", "offset", Dimension::time, "0ns", 0, 1, "pulse arrival time within the period"),
  };

  all["fit-saturation"] = {
      text("input", "data", "", "CSV with power and count-rate columns"),
      quantity("fit", "rep_rate", Dimension::frequency, "20MHz", 0, 1e12, "laser repetition rate"),
      choice("fit", "model", "auto", {"auto", "cw", "pulsed"}, "auto: cw at >= 20 MHz"),
      choice("fit", "background", "none", {"none", "fit", "subtract"}, "linear background handling"),
      number("fit", "background_slope", "0", -1e300, 1e300, "count rate per input power unit, for subtract"),
  };
  all["fit-odmr"] = {
      text("input", "data", "", "CSV with frequency and signal columns"),
      quantity("input", "x_unit", Dimension::frequency, "1Hz", 1e-300, 1e300, "unit of the frequency column"),
  };
  all["fit-rabi"] = {
      text("input", "data", "", "CSV with time and signal columns"),
      quantity("input", "x_unit", Dimension::time, "1s", 1e-300, 1e300, "unit of the time column"),
  };
  all["fit-echo"] = {
      text("input", "data", "", "CSV with delay and signal columns"),
      quantity("input", "x_unit", Dimension::time, "1s", 1e-300, 1e300, "unit of the delay column"),
      boolean("fit", "free_stretch", "false", "fit the stretch exponent"),
  };

  all["simulate-emitter"] = {
      quantity("emitter", "lifetime", Dimension::time, "9ns", 1e-12, 1, "excited-state lifetime"),
      number("emitter", "isc_probability", "0.1", 0, 0.999, "branching into the metastable state"),
      quantity("emitter", "metastable_lifetime", Dimension::time, "50ns", 1e-12, 1, ""),
      number("emitter", "collection_efficiency", "0.02", 1e-9, 1, "detected share of emitted photons"),
      choice("emitter", "excitation", "pulsed", {"pulsed", "cw"}, ""),
      quantity("emitter", "rep_rate", Dimension::frequency, "10MHz", 1, 1e10, "pulsed repetition rate"),
      number("emitter", "excitation_probability", "0.8", 1e-9, 1, "per pulse from the ground state"),
      quantity("emitter", "pump_rate", Dimension::frequency, "50MHz", 1, 1e12, "cw excitation rate"),
      quantity("emitter", "duration", Dimension::time, "1s", 1e-6, 1000, "acquisition time"),
      boolean("emitter", "enabled", "true", "false: background only"),
      number("background", "g2_target", "-1", -1, 0.999, "set background from the signal for this g2(0); < 0 off"),
      quantity("background", "rate", Dimension::rate, "0cps", 0, 1e9, "detected background rate"),
      quantity("background", "lifetime", Dimension::time, "6ns", 1e-12, 1, "background emitter lifetime"),
      quantity("detector", "jitter", Dimension::time, "100ps", 0, 1e-6, "Gaussian timing sigma"),
      choice("analysis", "snr_definition", "ratio", {"ratio", "shot-noise"}, "signal/background or signal/sqrt(total)"),
      choice("output", "format", "binary", {"binary", "csv", "both"}, "time-tag file format"),
  };

  for (auto& [name, schema] : all) append(schema, run_keys());
  return all;
}

const std::map<std::string, Schema, std::less<>>& schemas() {
  static const auto all = build_schemas();
  return all;
}

const KeySpec* find_spec(const Schema& schema, std::string_view section, std::string_view key) {
  for (const auto& s : schema) {
    if (s.section == section && s.key == key) return &s;
  }
  return nullptr;
}

std::string strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    if (line[k] == '"') quoted = !quoted;
    if (!quoted && line[k] == '#') return std::string(line.substr(0, k));
  }
  return std::string(line);
}

}  // namespace

double unit_scale(std::string_view unit, Dimension& dim) {
  for (const auto& u : kUnits) {
    if (u.name == unit) {
      dim = u.dim;
      return u.scale;
    }
  }
  fail(ErrorCode::parse_error, "unknown unit '" + std::string(unit) + "'");
}

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::default_value: return "default";
    case Provenance::user: return "user";
    case Provenance::flag: return "flag";
  }
  return "default";
}

const ConfigValue& RunConfig::at(std::string_view name) const {
  const auto it = values.find(std::string(name));
  if (it == values.end()) fail(ErrorCode::invalid_argument, "config has no key '" + std::string(name) + "'");
  return it->second;
}

double RunConfig::number(std::string_view name) const {
  const auto& v = at(name);
  if (v.numbers.size() != 1) fail(ErrorCode::invalid_argument, "'" + std::string(name) + "' is not a scalar");
  return v.numbers.front();
}

long long RunConfig::integer(std::string_view name) const { return std::llround(number(name)); }

bool RunConfig::boolean(std::string_view name) const { return number(name) != 0.0; }

const std::string& RunConfig::text(std::string_view name) const { return at(name).word; }

const std::vector<double>& RunConfig::list(std::string_view name) const { return at(name).numbers; }

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out << "command = " << command << "\n";
  std::string section;
  for (const auto& spec : command_schema(command)) {
    const auto it = values.find(spec.name());
    if (it == values.end()) continue;
    if (spec.section != section) {
      section = spec.section;
      out << "\n[" << section << "]\n";
    }
    const std::string& t = it->second.text;
    const bool quote = spec.kind == ValueKind::text && (t.empty() || t.find('#') != std::string::npos);
    out << spec.key << " = " << (quote ? "\"" + t + "\"" : t) << "\n";
  }
  return out.str();
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {
      "mode-solve", "mode-sweep", "dipole-map", "taper-sweep", "eta-wfi",
      "spin-odmr", "strain-shift", "raman-fit", "raman-map", "g2",
      "fit-saturation", "fit-odmr", "fit-rabi", "fit-echo", "simulate-emitter"};
  return names;
}

const std::vector<KeySpec>& command_schema(std::string_view command) {
  const auto it = schemas().find(command);
  if (it == schemas().end()) {
    fail(ErrorCode::unknown_command, "unknown command '" + std::string(command) + "'");
  }
  return it->second;
}

RunConfig parse_config(std::string_view text, std::string_view command_hint) {
  struct Line {
    int number;
    std::string content;
  };
  std::vector<Line> lines;
  {
    std::istringstream in{std::string(text)};
    std::string raw;
    int n = 0;
    while (std::getline(in, raw)) {
      ++n;
      std::string s(trim(strip_comment(raw)));
      if (!s.empty()) lines.push_back({n, s});
    }
  }

  RunConfig config;
  config.command = std::string(command_hint);
  for (const auto& l : lines) {
    if (l.content.front() == '[') break;
    const auto eq = l.content.find('=');
    if (eq == std::string::npos || trim(std::string_view(l.content).substr(0, eq)) != "command") continue;
    const std::string cmd(trim(std::string_view(l.content).substr(eq + 1)));
    if (!command_hint.empty() && cmd != command_hint) {
      parse_fail(l.number, "config is for '" + cmd + "' but the command is '" + std::string(command_hint) + "'");
    }
    config.command = cmd;
  }
  if (config.command.empty()) parse_fail(0, "no command given");
  const Schema& schema = command_schema(config.command);

  std::set<std::string> sections;
  for (const auto& s : schema) sections.insert(s.section);
  std::string section;
  bool seen_command = false;
  for (const auto& l : lines) {
    std::string_view c = l.content;
    if (c.front() == '[') {
      if (c.back() != ']') parse_fail(l.number, "malformed section header");
      section = std::string(trim(c.substr(1, c.size() - 2)));
      if (!sections.count(section)) {
        parse_fail(l.number, "unknown section [" + section + "] for command '" + config.command + "'");
      }
      continue;
    }
    const auto eq = c.find('=');
    if (eq == std::string_view::npos) parse_fail(l.number, "expected key = value");
    const std::string key(trim(c.substr(0, eq)));
    const std::string_view value = c.substr(eq + 1);
    if (key.empty()) parse_fail(l.number, "missing key before '='");
    if (section.empty()) {
      if (key != "command") parse_fail(l.number, "key '" + key + "' must be inside a [section]");
      if (seen_command) parse_fail(l.number, "duplicate key 'command'");
      seen_command = true;
      continue;
    }
    const KeySpec* spec = find_spec(schema, section, key);
    if (!spec) parse_fail(l.number, "unknown key '" + key + "' in [" + section + "]");
    if (config.values.count(spec->name())) {
      parse_fail(l.number, "duplicate key '" + spec->name() + "' (first set on line " +
                               std::to_string(config.values[spec->name()].line) + ")");
    }
    config.values[spec->name()] = parse_value(value, *spec, l.number, Provenance::user);
  }
  for (const auto& spec : schema) {
    if (!config.values.count(spec.name())) {
      config.values[spec.name()] = parse_value(spec.default_text, spec, 0, Provenance::default_value);
    }
  }
  return config;
}

void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq) {
    parse_fail(0, "override '" + std::string(assignment) + "' is not section.key=value");
  }
  const std::string_view section = trim(assignment.substr(0, dot));
  const std::string_view key = trim(assignment.substr(dot + 1, eq - dot - 1));
  const KeySpec* spec = find_spec(command_schema(config.command), section, key);
  if (!spec) {
    parse_fail(0, "unknown key '" + std::string(key) + "' in [" + std::string(section) + "]");
  }
  config.values[spec->name()] = parse_value(assignment.substr(eq + 1), *spec, 0, Provenance::flag);
}

}  // namespace sicwfi
