#include "sicwfi/photon_stats.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "sicwfi/constants.hpp"
#include "sicwfi/error.hpp"
#include "sicwfi/least_squares.hpp"

namespace sicwfi {

void TimeTagStream::validate() const {
  if (!source.empty() && source.size() != events.size()) {
    fail(ErrorCode::invalid_argument, "source labels do not match the event count");
  }
  std::vector<std::int64_t> last(256, -1);
  std::vector<bool> declared(256, channels.empty());
  for (auto c : channels) declared[c] = true;
  for (const auto& e : events) {
    if (!declared[e.channel]) {
      fail(ErrorCode::invalid_argument,
           "event on undeclared channel " + std::to_string(int(e.channel)));
    }
    const auto t = static_cast<std::int64_t>(e.time_ps);
    if (t < last[e.channel]) {
      fail(ErrorCode::invalid_argument,
           "timestamps decrease on channel " + std::to_string(int(e.channel)));
    }
    last[e.channel] = t;
  }
}

std::vector<std::int64_t> TimeTagStream::times(std::uint8_t channel) const {
  std::vector<std::int64_t> t;
  for (const auto& e : events) {
    if (e.channel == channel) t.push_back(static_cast<std::int64_t>(e.time_ps));
  }
  return t;
}

std::size_t TimeTagStream::count(std::uint8_t channel) const {
  return static_cast<std::size_t>(std::count_if(
      events.begin(), events.end(), [&](const TimeTag& e) { return e.channel == channel; }));
}

namespace {

void finish_loaded(TimeTagStream& s) {
  std::vector<bool> seen(256, false);
  std::uint64_t lo = std::numeric_limits<std::uint64_t>::max(), hi = 0;
  for (const auto& e : s.events) {
    seen[e.channel] = true;
    lo = std::min(lo, e.time_ps);
    hi = std::max(hi, e.time_ps);
  }
  for (int c = 0; c < 256; ++c) {
    if (seen[c]) s.channels.push_back(static_cast<std::uint8_t>(c));
  }
  s.duration_ps = s.events.empty() ? 0 : hi - lo;
  s.validate();
}

}  // namespace

TimeTagStream read_time_tags_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() % 9 != 0) {
    fail(ErrorCode::io_error, path.string() + ": size is not a multiple of 9-byte records");
  }
  TimeTagStream s;
  for (std::size_t off = 0; off < bytes.size(); off += 9) {
    TimeTag t;
    t.channel = bytes[off];
    for (int b = 7; b >= 0; --b) t.time_ps = (t.time_ps << 8) | bytes[off + 1 + b];
    s.events.push_back(t);
  }
  finish_loaded(s);
  return s;
}

void write_time_tags_binary(const TimeTagStream& stream, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  for (const auto& e : stream.events) {
    char rec[9];
    rec[0] = static_cast<char>(e.channel);
    for (int b = 0; b < 8; ++b) rec[1 + b] = static_cast<char>((e.time_ps >> (8 * b)) & 0xff);
    out.write(rec, 9);
  }
  if (!out) fail(ErrorCode::io_error, "write failed for " + path.string());
}

TimeTagStream read_time_tags_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
  std::string line;
  TimeTagStream s;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.find("channel") != std::string::npos) continue;
    std::istringstream row(line);
    std::string ch, t;
    if (!std::getline(row, ch, ',') || !std::getline(row, t)) {
      fail(ErrorCode::io_error, path.string() + ":" + std::to_string(line_no) + ": expected channel,time_ps");
    }
    try {
      const unsigned long c = std::stoul(ch);
      if (c > 255) throw std::out_of_range("channel");
      s.events.push_back({static_cast<std::uint8_t>(c), std::stoull(t)});
    } catch (const std::exception&) {
      fail(ErrorCode::io_error, path.string() + ":" + std::to_string(line_no) + ": malformed record");
    }
  }
  finish_loaded(s);
  return s;
}

void write_time_tags_csv(const TimeTagStream& stream, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  out << "channel,time_ps\n";
  for (const auto& e : stream.events) out << int(e.channel) << ',' << e.time_ps << '\n';
}

std::string_view normalization_name(G2Normalization n) {
  switch (n) {
    case G2Normalization::raw: return "raw";
    case G2Normalization::long_delay: return "long-delay";
    case G2Normalization::poisson: return "poisson";
  }
  return "raw";
}

G2Normalization parse_normalization(std::string_view name) {
  for (auto n : {G2Normalization::raw, G2Normalization::long_delay, G2Normalization::poisson}) {
    if (name == normalization_name(n)) return n;
  }
  fail(ErrorCode::invalid_argument, "unknown g2 normalization '" + std::string(name) + "'");
}

CorrelationHistogram correlate(const TimeTagStream& stream, std::uint8_t a, std::uint8_t b,
                               const CorrelateOptions& options) {
  if (options.bin_ps <= 0 || options.window_ps <= 0) {
    fail(ErrorCode::invalid_argument, "correlation window and bin width must be positive");
  }
  const std::vector<std::int64_t> ta = stream.times(a);
  const std::vector<std::int64_t> tb = a == b ? ta : stream.times(b);
  if (ta.empty()) fail(ErrorCode::empty_channel, "channel " + std::to_string(int(a)) + " has no events");
  if (tb.empty()) fail(ErrorCode::empty_channel, "channel " + std::to_string(int(b)) + " has no events");
  if (!std::is_sorted(ta.begin(), ta.end()) || !std::is_sorted(tb.begin(), tb.end())) {
    fail(ErrorCode::invalid_argument, "timestamps must be sorted per channel");
  }
  const std::int64_t w = options.window_ps, bin = options.bin_ps;
  const std::size_t nb = static_cast<std::size_t>((2 * w + bin - 1) / bin);
  CorrelationHistogram h;
  h.counts.assign(nb, 0);
  for (std::size_t k = 0; k <= nb; ++k) h.edges.push_back(-w + static_cast<std::int64_t>(k) * bin);

  std::size_t lo = 0;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    while (lo < tb.size() && tb[lo] < ta[i] - w) ++lo;
    for (std::size_t j = lo; j < tb.size() && tb[j] - ta[i] < w; ++j) {
      if (a == b && j == i) continue;
      ++h.counts[static_cast<std::size_t>((tb[j] - ta[i] + w) / bin)];
    }
  }

  h.normalization = options.normalization;
  switch (options.normalization) {
    case G2Normalization::raw: h.norm = 1.0; break;
    case G2Normalization::long_delay: {
      double sum = 0.0;
      int used = 0;
      const double edge = (1.0 - options.long_delay_fraction) * static_cast<double>(w);
      for (std::size_t k = 0; k < nb; ++k) {
        if (std::abs(h.center(k)) >= edge) {
          sum += static_cast<double>(h.counts[k]);
          ++used;
        }
      }
      if (used == 0 || sum <= 0.0) {
        fail(ErrorCode::insufficient_data, "no coincidences at long delay to normalize by");
      }
      h.norm = sum / used;
      break;
    }
    case G2Normalization::poisson: {
      if (stream.duration_ps == 0) {
        fail(ErrorCode::insufficient_data, "Poisson normalization needs the acquisition duration");
      }
      h.norm = static_cast<double>(ta.size()) * static_cast<double>(tb.size()) *
               static_cast<double>(bin) / static_cast<double>(stream.duration_ps);
      break;
    }
  }
  h.g2.resize(nb);
  for (std::size_t k = 0; k < nb; ++k) h.g2[k] = static_cast<double>(h.counts[k]) / h.norm;
  return h;
}

PulsedEnvelope pulsed_g2_envelope(const CorrelationHistogram& hist, double rep_period_ps,
                                  int exclude_nearest) {
  if (hist.counts.empty()) fail(ErrorCode::insufficient_data, "empty correlation histogram");
  if (!(rep_period_ps > 0.0)) fail(ErrorCode::invalid_argument, "repetition period must be positive");
  const double bin = static_cast<double>(hist.edges[1] - hist.edges[0]);
  if (rep_period_ps < 2.0 * bin) {
    fail(ErrorCode::invalid_argument, "repetition period spans fewer than two bins");
  }
  const double lo = static_cast<double>(hist.edges.front());
  const double hi = static_cast<double>(hist.edges.back());
  const int kmax = static_cast<int>(std::floor((std::min(-lo, hi) - 0.5 * rep_period_ps) / rep_period_ps));
  if (kmax < 0) fail(ErrorCode::insufficient_data, "histogram shorter than one period");
  PulsedEnvelope env;
  for (int k = -kmax; k <= kmax; ++k) {
    const double a = (k - 0.5) * rep_period_ps, b = (k + 0.5) * rep_period_ps;
    double area = 0.0;
    for (std::size_t j = 0; j < hist.counts.size(); ++j) {
      const double c = hist.center(j);
      if (c >= a && c < b) area += static_cast<double>(hist.counts[j]);
    }
    env.peak.push_back(k);
    env.area.push_back(area);
  }
  double side = 0.0, center = 0.0;
  for (std::size_t i = 0; i < env.peak.size(); ++i) {
    if (env.peak[i] == 0) center = env.area[i];
    if (std::abs(env.peak[i]) > exclude_nearest) {
      side += env.area[i];
      ++env.side_peaks;
    }
  }
  if (env.side_peaks < 4) {
    fail(ErrorCode::insufficient_data,
         "only " + std::to_string(env.side_peaks) + " side peaks beyond the excluded ones");
  }
  env.side_mean = side / env.side_peaks;
  if (!(env.side_mean > 0.0)) fail(ErrorCode::insufficient_data, "side peaks are empty");
  env.g2_zero = center / env.side_mean;
  env.sigma_g2_zero = env.g2_zero * std::sqrt((center > 0 ? 1.0 / center : 0.0) + 1.0 / side);
  return env;
}

TimeTagStream time_gate(const TimeTagStream& stream, double rep_period_ps, double gate_start_ps,
                        double gate_end_ps, double pulse_offset_ps) {
  if (!(rep_period_ps > 0.0) || !(gate_end_ps > gate_start_ps)) {
    fail(ErrorCode::invalid_argument, "gate needs a positive period and start < end");
  }
  TimeTagStream out;
  out.duration_ps = stream.duration_ps;
  out.channels = stream.channels;
  for (std::size_t k = 0; k < stream.events.size(); ++k) {
    double phase = std::fmod(static_cast<double>(stream.events[k].time_ps) - pulse_offset_ps, rep_period_ps);
    if (phase < 0.0) phase += rep_period_ps;
    if (phase >= gate_start_ps && phase < gate_end_ps) {
      out.events.push_back(stream.events[k]);
      if (!stream.source.empty()) out.source.push_back(stream.source[k]);
    }
  }
  return out;
}

double FitResult::value(std::string_view name) const {
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (names[k] == name) return values(static_cast<Eigen::Index>(k));
  }
  fail(ErrorCode::invalid_argument, "fit has no parameter '" + std::string(name) + "'");
}

double FitResult::sigma(std::string_view name) const {
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (names[k] == name) return sigmas(static_cast<Eigen::Index>(k));
  }
  fail(ErrorCode::invalid_argument, "fit has no parameter '" + std::string(name) + "'");
}

bool FitResult::has_flag(std::string_view flag) const {
  return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

std::string_view saturation_model_name(SaturationModel m) {
  switch (m) {
    case SaturationModel::automatic: return "auto";
    case SaturationModel::cw: return "cw";
    case SaturationModel::pulsed: return "pulsed";
  }
  return "auto";
}

SaturationModel parse_saturation_model(std::string_view name) {
  for (auto m : {SaturationModel::automatic, SaturationModel::cw, SaturationModel::pulsed}) {
    if (name == saturation_model_name(m)) return m;
  }
  fail(ErrorCode::invalid_argument, "unknown saturation model '" + std::string(name) + "'");
}

std::string_view background_mode_name(BackgroundMode m) {
  switch (m) {
    case BackgroundMode::none: return "none";
    case BackgroundMode::fit: return "fit";
    case BackgroundMode::subtract: return "subtract";
  }
  return "none";
}

BackgroundMode parse_background_mode(std::string_view name) {
  for (auto m : {BackgroundMode::none, BackgroundMode::fit, BackgroundMode::subtract}) {
    if (name == background_mode_name(m)) return m;
  }
  fail(ErrorCode::invalid_argument, "unknown background mode '" + std::string(name) + "'");
}

SaturationModel select_saturation_model(double rep_rate_hz) {
  return rep_rate_hz >= 20e6 ? SaturationModel::cw : SaturationModel::pulsed;
}

double saturation_curve(SaturationModel model, double i_s, double p_s, double power) {
  if (model == SaturationModel::pulsed) return i_s * -std::expm1(-power / p_s);
  return i_s * power / (power + p_s);
}

namespace {

void check_xy(const std::vector<double>& x, const std::vector<double>& y, std::size_t min_points,
              const char* what) {
  if (x.size() != y.size()) fail(ErrorCode::axis_mismatch, std::string(what) + ": x and y differ in length");
  if (x.size() < min_points) {
    fail(ErrorCode::insufficient_data, std::string(what) + ": at least " +
                                           std::to_string(min_points) + " points are required");
  }
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!std::isfinite(x[k]) || !std::isfinite(y[k])) {
      fail(ErrorCode::invalid_argument, std::string(what) + ": non-finite data");
    }
  }
}

FitResult make_result(std::string model, std::vector<std::string> names, const LsqResult& lsq) {
  FitResult r;
  r.model = std::move(model);
  r.names = std::move(names);
  r.values = lsq.params;
  r.sigmas = lsq.sigma();
  r.residual_norm = std::sqrt(lsq.rss);
  r.dof = lsq.dof;
  r.converged = lsq.converged;
  return r;
}

double noise_of(const LsqResult& lsq) { return std::sqrt(lsq.rss / std::max(lsq.dof, 1)); }

}  // namespace

FitResult fit_saturation(const std::vector<double>& power, const std::vector<double>& intensity,
                         double rep_rate_hz, const SaturationOptions& options) {
  check_xy(power, intensity, 5, "saturation fit");
  for (double p : power) {
    if (!(p >= 0.0)) fail(ErrorCode::invalid_argument, "saturation fit: negative power");
  }
  const SaturationModel model = options.model == SaturationModel::automatic
                                    ? select_saturation_model(rep_rate_hz)
                                    : options.model;
  const int m = static_cast<int>(power.size());
  std::vector<double> y = intensity;
  if (options.background == BackgroundMode::subtract) {
    for (int k = 0; k < m; ++k) y[k] -= options.background_slope * power[k];
  }
  const bool fit_b = options.background == BackgroundMode::fit;
  const double pmax = *std::max_element(power.begin(), power.end());
  const double ymax = *std::max_element(y.begin(), y.end());
  if (!(ymax > 0.0)) fail(ErrorCode::unidentifiable, "saturation fit: no positive intensity");
  // P_s guess: first power reaching half of the maximum.
  double ps0 = 0.3 * pmax;
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return power[a] < power[b]; });
  for (std::size_t k : order) {
    if (y[k] >= 0.5 * ymax) {
      ps0 = std::max(power[k], 1e-6 * pmax);
      break;
    }
  }
  Eigen::VectorXd p0(fit_b ? 3 : 2);
  p0(0) = std::log(ymax);
  p0(1) = std::log(ps0);
  if (fit_b) p0(2) = 0.0;
  const ResidualFn residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    const double i_s = std::exp(p(0)), p_s = std::exp(p(1));
    for (int k = 0; k < m; ++k) {
      const double f = saturation_curve(model, i_s, p_s, power[k]) + (fit_b ? p(2) * power[k] : 0.0);
      r(k) = (f - y[k]) / std::sqrt(std::max(std::abs(y[k]), 1.0));
    }
  };
  const LsqResult lsq = least_squares(residual, m, p0);
  const std::string name = model == SaturationModel::cw ? "saturation-cw" : "saturation-pulsed";
  FitResult r = make_result(name, fit_b ? std::vector<std::string>{"I_s", "P_s", "b"}
                                        : std::vector<std::string>{"I_s", "P_s"},
                            lsq);
  for (int k = 0; k < 2; ++k) {
    r.values(k) = std::exp(lsq.params(k));
    r.sigmas(k) = r.values(k) * r.sigmas(k);
  }
  if (!lsq.converged) fail(ErrorCode::fit_failure, "saturation fit did not converge");
  const double p_s = r.values(1);
  const double pmin = *std::min_element(power.begin(), power.end());
  if (!std::isfinite(p_s) || p_s > pmax || p_s < pmin || !(r.sigmas(1) < p_s)) {
    std::ostringstream msg;
    msg << "saturation power " << p_s << " is not bracketed by the data (" << pmin << " to "
        << pmax << "); the curve shows no usable curvature";
    fail(ErrorCode::unidentifiable, msg.str());
  }
  return r;
}

double snr(double signal_rate, double background_rate, SnrDefinition definition) {
  if (!(signal_rate >= 0.0) || !(background_rate >= 0.0)) {
    fail(ErrorCode::invalid_argument, "rates must be non-negative");
  }
  if (definition == SnrDefinition::ratio) {
    if (!(background_rate > 0.0)) fail(ErrorCode::invalid_argument, "background rate must be > 0");
    return signal_rate / background_rate;
  }
  const double total = signal_rate + background_rate;
  return total > 0.0 ? signal_rate / std::sqrt(total) : 0.0;
}

FitResult fit_odmr(const std::vector<double>& frequency, const std::vector<double>& signal) {
  check_xy(frequency, signal, 10, "ODMR fit");
  const int m = static_cast<int>(frequency.size());
  std::vector<double> sorted = signal;
  std::nth_element(sorted.begin(), sorted.begin() + m / 2, sorted.end());
  const double med = sorted[m / 2];
  const auto [mn, mx] = std::minmax_element(signal.begin(), signal.end());
  if (!(*mx > *mn)) fail(ErrorCode::no_peak, "ODMR spectrum is flat");
  const bool dip = med - *mn > *mx - med;
  const int ext = static_cast<int>((dip ? mn : mx) - signal.begin());
  const double a0 = signal[ext] - med;
  double lo = frequency[ext], hi = frequency[ext];
  for (int k = ext; k >= 0 && std::abs(signal[k] - med) > 0.5 * std::abs(a0); --k) lo = frequency[k];
  for (int k = ext; k < m && std::abs(signal[k] - med) > 0.5 * std::abs(a0); ++k) hi = frequency[k];
  const double span = *std::max_element(frequency.begin(), frequency.end()) -
                      *std::min_element(frequency.begin(), frequency.end());
  const double w0 = std::max(hi - lo, 2.0 * span / (m - 1));
  Eigen::VectorXd p0(4);
  p0 << frequency[ext], std::log(w0), a0, med;
  const ResidualFn residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    const double w = std::exp(p(1));
    for (int k = 0; k < m; ++k) {
      const double u = (frequency[k] - p(0)) / w;
      r(k) = p(3) + p(2) / (1.0 + 4.0 * u * u) - signal[k];
    }
  };
  const LsqResult lsq = least_squares(residual, m, p0);
  FitResult r = make_result("odmr-lorentzian", {"center", "fwhm", "contrast", "offset"}, lsq);
  r.values(1) = std::exp(lsq.params(1));
  r.sigmas(1) = r.values(1) * r.sigmas(1);
  if (!lsq.converged) fail(ErrorCode::fit_failure, "ODMR fit did not converge");
  const double noise = noise_of(lsq);
  std::ostringstream msg;
  if (!(std::abs(r.values(2)) > 3.0 * noise) || !(std::abs(r.values(2)) > 3.0 * r.sigmas(2))) {
    msg << "ODMR contrast " << r.values(2) << " is not above 3 x noise " << noise
        << " and 3 x its uncertainty " << r.sigmas(2);
  } else if (r.values(1) > span || r.values(1) < 2.0 * span / (m - 1)) {
    msg << "ODMR linewidth " << r.values(1) << " Hz is not resolved by the frequency grid";
  }
  if (!msg.str().empty()) fail(ErrorCode::no_peak, msg.str());
  return r;
}

namespace {

bool strictly_increasing(const std::vector<double>& x) {
  for (std::size_t k = 1; k < x.size(); ++k) {
    if (!(x[k] > x[k - 1])) return false;
  }
  return true;
}

}  // namespace

FitResult fit_rabi(const std::vector<double>& time, const std::vector<double>& signal) {
  check_xy(time, signal, 8, "Rabi fit");
  if (!strictly_increasing(time)) fail(ErrorCode::invalid_argument, "Rabi fit: times must increase");
  const int m = static_cast<int>(time.size());
  const double t0 = time.front();
  const double duration = time.back() - t0;
  const double mean = std::accumulate(signal.begin(), signal.end(), 0.0) / m;
  double var = 0.0;
  for (double v : signal) var += (v - mean) * (v - mean);
  if (!(var > 1e-24 * (mean * mean + 1e-300))) {
    fail(ErrorCode::unidentifiable, "Rabi trace carries no oscillation");
  }
  // Direct periodogram on a grid oversampled 8x up to the mean Nyquist limit.
  const double nyquist = 0.5 * (m - 1) / duration;
  const double df = 1.0 / (8.0 * duration);
  std::vector<double> freqs, powers;
  for (double f = df; f <= nyquist; f += df) {
    std::complex<double> acc = 0.0;
    for (int k = 0; k < m; ++k) acc += (signal[k] - mean) * std::polar(1.0, -2.0 * kPi * f * (time[k] - t0));
    freqs.push_back(f);
    powers.push_back(std::norm(acc));
  }
  if (freqs.empty()) fail(ErrorCode::unidentifiable, "Rabi trace too short for a spectrum");
  const std::size_t best = static_cast<std::size_t>(std::max_element(powers.begin(), powers.end()) - powers.begin());
  std::vector<double> sorted = powers;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double f0 = freqs[best];
  if (powers[best] < 20.0 * sorted[sorted.size() / 2] || f0 * duration < 3.0) {
    std::ostringstream msg;
    msg << "no spectral peak with at least 3 sampled periods (best " << f0 << " Hz over "
        << duration << " s)";
    fail(ErrorCode::unidentifiable, msg.str());
  }
  // Linear solve for amplitude and phase at the periodogram frequency.
  const double g0 = 1.0 / duration;
  Eigen::MatrixXd basis(m, 3);
  Eigen::VectorXd y(m);
  for (int k = 0; k < m; ++k) {
    const double t = time[k] - t0, e = std::exp(-g0 * t);
    basis(k, 0) = e * std::cos(2.0 * kPi * f0 * t);
    basis(k, 1) = e * std::sin(2.0 * kPi * f0 * t);
    basis(k, 2) = 1.0;
    y(k) = signal[k];
  }
  const Eigen::Vector3d c = basis.colPivHouseholderQr().solve(y);
  Eigen::VectorXd p0(5);
  p0 << std::hypot(c(0), c(1)), f0, std::atan2(-c(1), c(0)), g0, c(2);
  const ResidualFn residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    for (int k = 0; k < m; ++k) {
      const double t = time[k] - t0;
      r(k) = p(0) * std::cos(2.0 * kPi * p(1) * t + p(2)) * std::exp(-p(3) * t) + p(4) - signal[k];
    }
  };
  const LsqResult lsq = least_squares(residual, m, p0);
  if (!lsq.converged) fail(ErrorCode::fit_failure, "Rabi fit did not converge");
  FitResult r = make_result("rabi", {"amplitude", "frequency", "phase", "tau", "offset"}, lsq);
  double amp = lsq.params(0), phase = lsq.params(2);
  if (amp < 0.0) {
    amp = -amp;
    phase += kPi;
  }
  phase = std::remainder(phase, 2.0 * kPi);
  r.values(0) = amp;
  r.values(2) = phase;
  const double rate = lsq.params(3);
  if (rate > 0.0) {
    r.values(3) = 1.0 / rate;
    r.sigmas(3) = r.sigmas(3) / (rate * rate);
  } else {
    r.values(3) = std::numeric_limits<double>::infinity();
    r.sigmas(3) = std::numeric_limits<double>::infinity();
  }
  if (r.values(3) > duration) r.flags.push_back("tau-exceeds-trace");
  return r;
}

FitResult fit_hahn_echo(const std::vector<double>& delay, const std::vector<double>& signal,
                        bool free_stretch) {
  check_xy(delay, signal, free_stretch ? 6 : 5, "Hahn-echo fit");
  if (!strictly_increasing(delay)) fail(ErrorCode::invalid_argument, "Hahn-echo fit: delays must increase");
  const int m = static_cast<int>(delay.size());
  const int edge = std::max(1, m / 10);
  double head = 0.0, tail = 0.0;
  for (int k = 0; k < edge; ++k) {
    head += signal[k] / edge;
    tail += signal[m - 1 - k] / edge;
  }
  const auto [mn, mx] = std::minmax_element(signal.begin(), signal.end());
  if (!(*mx - *mn > 1e-12 * (std::abs(*mx) + 1e-300)) || head == tail) {
    fail(ErrorCode::unidentifiable, "Hahn-echo trace does not decay");
  }
  const double a0 = head - tail;
  double t2 = delay.back() / 3.0;
  for (int k = 0; k < m; ++k) {
    if (std::abs(signal[k] - tail) < std::abs(a0) / std::exp(1.0)) {
      t2 = std::max(delay[k], delay.back() / (2.0 * m));
      break;
    }
  }
  Eigen::VectorXd p0(free_stretch ? 4 : 3);
  p0(0) = a0;
  p0(1) = std::log(t2);
  p0(2) = tail;
  if (free_stretch) p0(3) = 0.0;
  const ResidualFn residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    const double tt = std::exp(p(1));
    const double n = free_stretch ? std::exp(p(3)) : 1.0;
    for (int k = 0; k < m; ++k) {
      r(k) = p(0) * std::exp(-std::pow(delay[k] / tt, n)) + p(2) - signal[k];
    }
  };
  const LsqResult lsq = least_squares(residual, m, p0);
  if (!lsq.converged) fail(ErrorCode::fit_failure, "Hahn-echo fit did not converge");
  FitResult r = make_result(free_stretch ? "hahn-echo-stretched" : "hahn-echo",
                            free_stretch ? std::vector<std::string>{"amplitude", "T2", "offset", "n"}
                                         : std::vector<std::string>{"amplitude", "T2", "offset"},
                            lsq);
  r.values(1) = std::exp(lsq.params(1));
  r.sigmas(1) = r.values(1) * r.sigmas(1);
  if (free_stretch) {
    r.values(3) = std::exp(lsq.params(3));
    r.sigmas(3) = r.values(3) * r.sigmas(3);
  }
  const double noise = noise_of(lsq);
  if (!(std::abs(r.values(0)) > 3.0 * noise)) {
    fail(ErrorCode::unidentifiable, "Hahn-echo decay amplitude is not above 3 x noise");
  }
  if (r.values(1) > delay.back()) {
    std::ostringstream msg;
    msg << "delays up to " << delay.back() << " do not span the fitted T2 " << r.values(1);
    fail(ErrorCode::unidentifiable, msg.str());
  }
  return r;
}

TimeTagStream simulate_emitter(const EmitterParams& p) {
  if (!(p.lifetime > 0 && p.metastable_lifetime > 0 && p.duration > 0 && p.background_lifetime > 0)) {
    fail(ErrorCode::invalid_argument, "emitter times must be positive");
  }
  if (!(p.collection_efficiency > 0 && p.collection_efficiency <= 1) ||
      !(p.isc_probability >= 0 && p.isc_probability < 1)) {
    fail(ErrorCode::invalid_argument, "probabilities out of range");
  }
  if (p.pulsed && (!(p.rep_rate > 0) || !(p.excitation_probability > 0 && p.excitation_probability <= 1))) {
    fail(ErrorCode::invalid_argument, "pulsed excitation needs a rate and a probability in (0, 1]");
  }
  if (!p.pulsed && !(p.pump_rate > 0)) fail(ErrorCode::invalid_argument, "pump rate must be positive");
  if (!(p.jitter >= 0) || !(p.background_rate >= 0) || p.g2_target >= 1.0) {
    fail(ErrorCode::invalid_argument, "jitter, background rate or g2 target out of range");
  }

  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> decay(1.0 / p.lifetime);
  std::exponential_distribution<double> shelf(1.0 / p.metastable_lifetime);
  std::exponential_distribution<double> bg_decay(1.0 / p.background_lifetime);
  std::normal_distribution<double> jitter(0.0, p.jitter);
  const double period = p.pulsed ? 1.0 / p.rep_rate : 0.0;
  const auto n_pulses = p.pulsed ? static_cast<std::int64_t>(std::floor(p.duration * p.rep_rate)) : 0;

  struct Raw {
    double t;
    std::uint8_t channel;
    std::uint8_t source;
  };
  std::vector<Raw> raw;
  auto detect = [&](double t, EventSource src) {
    t += p.jitter > 0.0 ? jitter(rng) : 0.0;
    raw.push_back({t, static_cast<std::uint8_t>(unif(rng) < 0.5 ? 0 : 1), static_cast<std::uint8_t>(src)});
  };

  std::size_t signal = 0;
  if (p.emitter) {
    if (p.pulsed) {
      std::geometric_distribution<std::int64_t> wait(p.excitation_probability);
      std::int64_t k = 0;
      while (true) {
        k += wait(rng);
        if (k >= n_pulses) break;
        const double excited = k * period;
        double ground = excited + decay(rng);
        if (unif(rng) < p.isc_probability) {
          ground += shelf(rng);
        } else if (unif(rng) < p.collection_efficiency) {
          detect(ground, EventSource::emitter);
          ++signal;
        }
        k = static_cast<std::int64_t>(std::floor(ground / period)) + 1;
      }
    } else {
      std::exponential_distribution<double> pump(p.pump_rate);
      double t = 0.0;
      while (true) {
        t += pump(rng);
        if (t >= p.duration) break;
        t += decay(rng);
        if (unif(rng) < p.isc_probability) {
          t += shelf(rng);
        } else if (unif(rng) < p.collection_efficiency) {
          detect(t, EventSource::emitter);
          ++signal;
        }
      }
    }
  }

  double bg_rate = p.background_rate;
  if (p.g2_target >= 0.0) {
    const double s = static_cast<double>(signal) / p.duration;
    const double rho = std::sqrt(1.0 - p.g2_target);
    bg_rate = s * (1.0 - rho) / rho;
  }
  if (bg_rate > 0.0) {
    std::poisson_distribution<std::int64_t> total(bg_rate * p.duration);
    const std::int64_t n = total(rng);
    for (std::int64_t j = 0; j < n; ++j) {
      if (p.pulsed) {
        std::uniform_int_distribution<std::int64_t> pulse(0, std::max<std::int64_t>(n_pulses - 1, 0));
        detect(pulse(rng) * period + bg_decay(rng), EventSource::background);
      } else {
        detect(unif(rng) * p.duration, EventSource::background);
      }
    }
  }

  std::sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) {
    return a.t < b.t || (a.t == b.t && a.channel < b.channel);
  });
  TimeTagStream s;
  s.channels = {0, 1};
  s.duration_ps = static_cast<std::uint64_t>(std::llround(p.duration * 1e12));
  for (const auto& r : raw) {
    const double ps = std::max(0.0, std::round(r.t * 1e12));
    s.events.push_back({r.channel, static_cast<std::uint64_t>(ps)});
    s.source.push_back(r.source);
  }
  return s;
}

SyntheticTrace synthesize_saturation(SaturationModel model, double i_s, double p_s,
                                     double background_slope, const std::vector<double>& power,
                                     double integration_s, std::uint64_t seed) {
  if (model == SaturationModel::automatic) {
    fail(ErrorCode::invalid_argument, "synthetic saturation data need an explicit model");
  }
  std::mt19937_64 rng(seed);
  SyntheticTrace out;
  for (double pw : power) {
    const double rate = saturation_curve(model, i_s, p_s, pw) + background_slope * pw;
    std::poisson_distribution<std::int64_t> counts(std::max(rate, 0.0) * integration_s);
    out.x.push_back(pw);
    out.y.push_back(static_cast<double>(counts(rng)) / integration_s);
  }
  return out;
}

namespace {

SyntheticTrace with_noise(const std::vector<double>& x, const std::vector<double>& clean,
                          double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, noise);
  SyntheticTrace out{x, clean};
  if (noise > 0.0) {
    for (double& v : out.y) v += n(rng);
  }
  return out;
}

}  // namespace

SyntheticTrace synthesize_odmr(double center, double fwhm, double contrast, double offset,
                               const std::vector<double>& frequency, double noise,
                               std::uint64_t seed) {
  std::vector<double> y;
  for (double f : frequency) {
    const double u = (f - center) / fwhm;
    y.push_back(offset + contrast / (1.0 + 4.0 * u * u));
  }
  return with_noise(frequency, y, noise, seed);
}

SyntheticTrace synthesize_rabi(double f, double tau, double amplitude, double phase,
                               double offset, const std::vector<double>& time, double noise,
                               std::uint64_t seed) {
  std::vector<double> y;
  for (double t : time) {
    const double envelope = std::isinf(tau) ? 1.0 : std::exp(-t / tau);
    y.push_back(offset + amplitude * std::cos(2.0 * kPi * f * t + phase) * envelope);
  }
  return with_noise(time, y, noise, seed);
}

SyntheticTrace synthesize_echo(double t2, double stretch, double amplitude, double offset,
                               const std::vector<double>& delay, double noise,
                               std::uint64_t seed) {
  std::vector<double> y;
  for (double t : delay) y.push_back(offset + amplitude * std::exp(-std::pow(t / t2, stretch)));
  return with_noise(delay, y, noise, seed);
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v;
  if (n == 1) return {a};
  for (int k = 0; k < n; ++k) v.push_back(a + (b - a) * k / (n - 1));
  return v;
}

}  // namespace sicwfi
