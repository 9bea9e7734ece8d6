#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace sicwfi {

/// Physical dimension of a config quantity. Each has one canonical unit in
/// which values are stored (see canonical_unit).
enum class Dimension {
  none,
  length,          // m
  angle,           // deg
  frequency,       // Hz
  time,            // s
  rate,            // counts per second
  stress,          // GPa
  electric_field,  // V/cm
  magnetic_field,  // T
  wavenumber,      // cm^-1
  gyromagnetic,    // Hz/T
  stark,           // Hz/(V/cm)
  phonon_shift,    // cm^-1/GPa
};

std::string_view dimension_name(Dimension d);
std::string_view canonical_unit(Dimension d);

/// Scale of `unit` to the canonical unit of its dimension, or throws
/// parse_error. Returns the dimension through `dim`.
double unit_scale(std::string_view unit, Dimension& dim);

enum class ValueKind { quantity, number, integer, boolean, text, choice, quantity_list };

/// One schema entry: `section.key`, its type, default and admissible range
/// (canonical units).
struct KeySpec {
  std::string section;
  std::string key;
  ValueKind kind = ValueKind::number;
  Dimension dimension = Dimension::none;  // quantity kinds; Dimension::none in a
                                          // quantity_list means "any one dimension"
  std::string default_text;
  double min = -1e300;
  double max = 1e300;
  std::vector<std::string> choices;
  std::string help;

  std::string name() const { return section + "." + key; }
};

enum class Provenance { default_value, user, flag };

std::string_view provenance_name(Provenance p);

struct ConfigValue {
  ValueKind kind = ValueKind::number;
  Dimension dimension = Dimension::none;
  std::string text;  // as written (or the default text)
  std::vector<double> numbers;  // canonical units; one entry for scalars
  std::string word;  // text and choice
  Provenance provenance = Provenance::default_value;
  int line = 0;  // 0 when not from the config file
};

struct RunConfig {
  std::string command;
  std::map<std::string, ConfigValue> values;  // keyed by section.key

  const ConfigValue& at(std::string_view name) const;
  double number(std::string_view name) const;
  long long integer(std::string_view name) const;
  bool boolean(std::string_view name) const;
  const std::string& text(std::string_view name) const;
  const std::vector<double>& list(std::string_view name) const;

  /// The resolved config in the same grammar, every key spelled out.
  std::string to_text() const;
};

/// Names of all commands, in documentation order.
const std::vector<std::string>& command_names();

/// Schema of a command, including the shared [run] section.
const std::vector<KeySpec>& command_schema(std::string_view command);

/// Parses the config grammar:
///
///   # comment
///   command = taper-sweep
///   [taper]
///   overlap = 15 um
///   [sweep]
///   values = 5um:40um:5um      # inclusive range; or [5um, 10um]
///
/// `command_hint` names the command when the text has no `command` line; if
/// both are present they must agree. Unknown keys, duplicate keys, missing
/// or wrong units and out-of-range values throw parse_error with the line.
RunConfig parse_config(std::string_view text, std::string_view command_hint = {});

/// Applies `section.key=value` overrides with Provenance::flag.
void apply_override(RunConfig& config, std::string_view assignment);

}  // namespace sicwfi
