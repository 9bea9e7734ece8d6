#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace sicwfi {

struct TimeTag {
  std::uint8_t channel = 0;
  std::uint64_t time_ps = 0;
};

/// Detector events. Timestamps are non-decreasing per channel; `source`
/// optionally labels each event (see EventSource) for simulated streams.
struct TimeTagStream {
  std::vector<TimeTag> events;
  std::uint64_t duration_ps = 0;
  std::vector<std::uint8_t> channels;  // declared channel set
  std::vector<std::uint8_t> source;    // empty or one label per event

  void validate() const;
  std::vector<std::int64_t> times(std::uint8_t channel) const;
  std::size_t count(std::uint8_t channel) const;
};

enum class EventSource : std::uint8_t { emitter = 0, background = 1 };

/// Packed little-endian records of 9 bytes (u8 channel, u64 ps), no header.
/// The duration defaults to the span between first and last event.
TimeTagStream read_time_tags_binary(const std::filesystem::path& path);
void write_time_tags_binary(const TimeTagStream& stream, const std::filesystem::path& path);
/// CSV with header `channel,time_ps`.
TimeTagStream read_time_tags_csv(const std::filesystem::path& path);
void write_time_tags_csv(const TimeTagStream& stream, const std::filesystem::path& path);

enum class G2Normalization { raw, long_delay, poisson };

std::string_view normalization_name(G2Normalization n);
G2Normalization parse_normalization(std::string_view name);

struct CorrelateOptions {
  std::int64_t window_ps = 200000;  // histogram covers [-window, window)
  std::int64_t bin_ps = 1000;
  G2Normalization normalization = G2Normalization::raw;
  double long_delay_fraction = 0.2;  // outer share of bins on each side
};

struct CorrelationHistogram {
  std::vector<std::int64_t> edges;  // ps, counts.size() + 1 entries
  std::vector<std::uint64_t> counts;
  std::vector<double> g2;  // counts divided by `norm`
  G2Normalization normalization = G2Normalization::raw;
  double norm = 1.0;
  double rep_period_ps = 0.0;  // set by pulsed analyses

  double center(std::size_t k) const { return 0.5 * double(edges[k] + edges[k + 1]); }
};

/// All pairs (a event, b event) with t_b - t_a in [-window, window), binned by
/// floor((dt + window) / bin). When a == b the zero-lag self pairs are
/// excluded.
CorrelationHistogram correlate(const TimeTagStream& stream, std::uint8_t a, std::uint8_t b,
                               const CorrelateOptions& options = {});

struct PulsedEnvelope {
  std::vector<int> peak;      // multiple of the repetition period
  std::vector<double> area;   // summed counts per period window
  double g2_zero = 0.0;
  double sigma_g2_zero = 0.0;
  double side_mean = 0.0;
  int side_peaks = 0;
};

/// Peak areas in full-period windows centred on k * period, and
/// g2(0) = area(0) / mean(area(|k| > exclude_nearest)).
PulsedEnvelope pulsed_g2_envelope(const CorrelationHistogram& hist, double rep_period_ps,
                                  int exclude_nearest = 2);

/// Keeps events whose delay after the most recent pulse lies in
/// [gate_start, gate_end).
TimeTagStream time_gate(const TimeTagStream& stream, double rep_period_ps, double gate_start_ps,
                        double gate_end_ps, double pulse_offset_ps = 0.0);

struct FitResult {
  std::string model;
  std::vector<std::string> names;
  Eigen::VectorXd values;
  Eigen::VectorXd sigmas;
  double residual_norm = 0.0;
  int dof = 0;
  bool converged = false;
  std::vector<std::string> flags;

  double value(std::string_view name) const;
  double sigma(std::string_view name) const;
  bool has_flag(std::string_view flag) const;
};

enum class SaturationModel { automatic, cw, pulsed };
enum class BackgroundMode { none, fit, subtract };

std::string_view saturation_model_name(SaturationModel m);
SaturationModel parse_saturation_model(std::string_view name);
std::string_view background_mode_name(BackgroundMode m);
BackgroundMode parse_background_mode(std::string_view name);

/// I_s P / (P + P_s) at repetition rates >= 20 MHz (threshold inclusive),
/// I_s (1 - exp(-P / P_s)) below.
SaturationModel select_saturation_model(double rep_rate_hz);

struct SaturationOptions {
  SaturationModel model = SaturationModel::automatic;
  BackgroundMode background = BackgroundMode::none;
  double background_slope = 0.0;  // cps per power unit, for `subtract`
};

/// Parameters I_s, P_s (and b when fitted) in the units of the input.
FitResult fit_saturation(const std::vector<double>& power, const std::vector<double>& intensity,
                         double rep_rate_hz, const SaturationOptions& options = {});

double saturation_curve(SaturationModel model, double i_s, double p_s, double power);

enum class SnrDefinition { ratio, shot_noise };

/// signal / background, or signal / sqrt(signal + background).
double snr(double signal_rate, double background_rate,
           SnrDefinition definition = SnrDefinition::ratio);

/// Offset plus one Lorentzian: offset + contrast / (1 + 4 (f - center)^2 / fwhm^2).
FitResult fit_odmr(const std::vector<double>& frequency, const std::vector<double>& signal);

/// offset + amplitude cos(2 pi f t + phase) exp(-t / tau), t counted from the
/// first sample. tau is reported as infinity when the fitted decay rate is
/// not positive, and flagged when it exceeds the trace duration.
FitResult fit_rabi(const std::vector<double>& time, const std::vector<double>& signal);

/// offset + amplitude exp(-(tau / t2)^n) with n = 1 unless `free_stretch`.
FitResult fit_hahn_echo(const std::vector<double>& delay, const std::vector<double>& signal,
                        bool free_stretch = false);

struct EmitterParams {
  double lifetime = 9e-9;             // excited state, s
  double isc_probability = 0.1;       // excited -> metastable branching
  double metastable_lifetime = 50e-9;  // s
  double collection_efficiency = 0.02;
  bool pulsed = true;
  double rep_rate = 10e6;              // Hz
  double excitation_probability = 0.8;  // per pulse, ground state
  double pump_rate = 5e7;               // cw excitation rate, 1/s
  double duration = 1.0;                // s
  // Background from independent short-lived surface emitters. With
  // g2_target in [0, 1) the background rate is set from the realized signal
  // so that g2(0) = 1 - (S / (S + B))^2; otherwise background_rate applies.
  double g2_target = -1.0;
  double background_rate = 0.0;       // detected cps
  double background_lifetime = 6e-9;  // s
  double jitter = 100e-12;            // Gaussian sigma, s
  bool emitter = true;                // false: background only
  std::uint64_t seed = 1;
};

/// Monte-Carlo three-level emitter plus background, detected behind a 50/50
/// splitter on channels 0 and 1. Deterministic for a given seed.
TimeTagStream simulate_emitter(const EmitterParams& params);

/// Noisy synthetic data for fitter tests.
struct SyntheticTrace {
  std::vector<double> x;
  std::vector<double> y;
};

SyntheticTrace synthesize_saturation(SaturationModel model, double i_s, double p_s,
                                     double background_slope, const std::vector<double>& power,
                                     double integration_s, std::uint64_t seed);
SyntheticTrace synthesize_odmr(double center, double fwhm, double contrast, double offset,
                               const std::vector<double>& frequency, double noise,
                               std::uint64_t seed);
SyntheticTrace synthesize_rabi(double f, double tau, double amplitude, double phase,
                               double offset, const std::vector<double>& time, double noise,
                               std::uint64_t seed);
SyntheticTrace synthesize_echo(double t2, double stretch, double amplitude, double offset,
                               const std::vector<double>& delay, double noise,
                               std::uint64_t seed);

/// n evenly spaced values from a to b inclusive.
std::vector<double> linspace(double a, double b, int n);

}  // namespace sicwfi
