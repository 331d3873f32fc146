#include "hifi/sigsynth.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hifi::sig {

namespace {

constexpr double kRolloff = 0.35;
constexpr int kRrcSpanSymbols = 8;
constexpr double kAmModIndex = 0.5;
constexpr int kAmComponents = 64;
constexpr int kPlacementBudget = 1000;
constexpr double kPureLosK = 1e6;

struct SchemeInfo {
  ModScheme scheme;
  const char* name;
};

const SchemeInfo kSchemes[kNumSchemes] = {
    {ModScheme::kBpsk, "BPSK"},   {ModScheme::kQpsk, "QPSK"},
    {ModScheme::k8Psk, "8PSK"},   {ModScheme::k16Psk, "16PSK"},
    {ModScheme::k16Qam, "16QAM"}, {ModScheme::k64Qam, "64QAM"},
    {ModScheme::k2Fsk, "2FSK"},   {ModScheme::k4Fsk, "4FSK"},
    {ModScheme::k8Fsk, "8FSK"},   {ModScheme::kOok, "OOK"},
    {ModScheme::k4Ask, "4ASK"},   {ModScheme::k8Ask, "8ASK"},
    {ModScheme::kAmDsb, "AM-DSB"}, {ModScheme::kAmSsb, "AM-SSB"},
};

int gray_code(int i) { return i ^ (i >> 1); }

/// Root-raised-cosine impulse response at t symbol periods.
double rrc_pulse(double t, double beta) {
  double abst = std::abs(t);
  if (abst < 1e-9) return 1.0 - beta + 4.0 * beta / M_PI;
  double knee = 1.0 / (4.0 * beta);
  if (std::abs(abst - knee) < 1e-9) {
    double a = (1.0 + 2.0 / M_PI) * std::sin(M_PI / (4.0 * beta));
    double b = (1.0 - 2.0 / M_PI) * std::cos(M_PI / (4.0 * beta));
    return beta / std::sqrt(2.0) * (a + b);
  }
  double num = std::sin(M_PI * t * (1.0 - beta)) +
               4.0 * beta * t * std::cos(M_PI * t * (1.0 + beta));
  double den = M_PI * t * (1.0 - (4.0 * beta * t) * (4.0 * beta * t));
  return num / den;
}

void normalize_power(std::vector<std::complex<double>>& x) {
  double p = 0.0;
  for (const auto& v : x) p += std::norm(v);
  p /= static_cast<double>(x.size());
  if (p < 1e-30) return;  // degenerate all-off keying
  double s = 1.0 / std::sqrt(p);
  for (auto& v : x) v *= s;
}

std::vector<int> random_bits(int count, Rng& rng) {
  std::vector<int> bits(static_cast<std::size_t>(count));
  for (auto& b : bits) b = rng.coin() ? 1 : 0;
  return bits;
}

bool is_fsk(ModScheme s) {
  return s == ModScheme::k2Fsk || s == ModScheme::k4Fsk || s == ModScheme::k8Fsk;
}

bool is_am(ModScheme s) { return s == ModScheme::kAmDsb || s == ModScheme::kAmSsb; }

int fsk_order(ModScheme s) {
  switch (s) {
    case ModScheme::k2Fsk: return 2;
    case ModScheme::k4Fsk: return 4;
    case ModScheme::k8Fsk: return 8;
    default: return 0;
  }
}

/// Continuous-phase M-FSK. Tones spaced by the symbol rate R = bw/(M+1), so
/// tone span plus transition bands stays inside bw.
std::vector<std::complex<double>> fsk_waveform(int order, const std::vector<int>& symbols,
                                               double sym_rate, double f_s, int n_samples) {
  std::vector<std::complex<double>> out(static_cast<std::size_t>(n_samples));
  double phase = 0.0;
  for (int n = 0; n < n_samples; ++n) {
    int k = std::min<int>(static_cast<int>(std::floor(n / f_s * sym_rate)),
                          static_cast<int>(symbols.size()) - 1);
    double tone = (symbols[static_cast<std::size_t>(k)] - (order - 1) * 0.5) * sym_rate;
    out[static_cast<std::size_t>(n)] = std::polar(1.0, phase);
    phase += 2.0 * M_PI * tone / f_s;
    // keep the accumulator bounded
    if (phase > M_PI) phase -= 2.0 * M_PI;
    if (phase < -M_PI) phase += 2.0 * M_PI;
  }
  return out;
}

/// Band-limited random message as a sum of sinusoids: real for DSB
/// (components in [0, max_f]), analytic for SSB.
std::vector<std::complex<double>> am_message(bool analytic, double max_f, double f_s,
                                             int n_samples, Rng& rng) {
  std::vector<double> freqs(kAmComponents), phases(kAmComponents);
  for (int i = 0; i < kAmComponents; ++i) {
    freqs[static_cast<std::size_t>(i)] = rng.uniform(0.0, max_f);
    phases[static_cast<std::size_t>(i)] = rng.uniform(0.0, 2.0 * M_PI);
  }
  std::vector<std::complex<double>> m(static_cast<std::size_t>(n_samples));
  for (int n = 0; n < n_samples; ++n) {
    double t = n / f_s;
    std::complex<double> acc = 0.0;
    for (int i = 0; i < kAmComponents; ++i) {
      double arg = 2.0 * M_PI * freqs[static_cast<std::size_t>(i)] * t +
                   phases[static_cast<std::size_t>(i)];
      if (analytic)
        acc += std::complex<double>(std::cos(arg), std::sin(arg));
      else
        acc += std::cos(arg);
    }
    m[static_cast<std::size_t>(n)] = acc;
  }
  double peak = 0.0;
  for (const auto& v : m) peak = std::max(peak, std::abs(v));
  if (peak > 0) {
    for (auto& v : m) v /= peak;
  }
  return m;
}

}  // namespace

int scheme_class_id(ModScheme s) { return static_cast<int>(s); }

const char* scheme_name(ModScheme s) { return kSchemes[static_cast<int>(s)].name; }

ModScheme scheme_from_name(const std::string& name) {
  for (const auto& info : kSchemes)
    if (name == info.name) return info.scheme;
  throw ConfigError("unknown modulation scheme: " + name);
}

const std::vector<ModScheme>& all_schemes() {
  static const std::vector<ModScheme> all = [] {
    std::vector<ModScheme> v;
    for (const auto& info : kSchemes) v.push_back(info.scheme);
    return v;
  }();
  return all;
}

int bits_per_symbol(ModScheme scheme) {
  switch (scheme) {
    case ModScheme::kBpsk:
    case ModScheme::kOok:
    case ModScheme::k2Fsk: return 1;
    case ModScheme::kQpsk:
    case ModScheme::k4Ask:
    case ModScheme::k4Fsk: return 2;
    case ModScheme::k8Psk:
    case ModScheme::k8Ask:
    case ModScheme::k8Fsk: return 3;
    case ModScheme::k16Psk:
    case ModScheme::k16Qam: return 4;
    case ModScheme::k64Qam: return 6;
    default: throw ConfigError("bits_per_symbol: waveform-level scheme");
  }
}

std::vector<std::complex<double>> map_bits_to_symbols(ModScheme scheme,
                                                      const std::vector<int>& bits) {
  int bps = bits_per_symbol(scheme);
  if (bits.size() % static_cast<std::size_t>(bps) != 0)
    throw ConfigError("bit count not a multiple of bits per symbol");
  std::size_t n_sym = bits.size() / static_cast<std::size_t>(bps);
  std::vector<std::complex<double>> syms(n_sym);

  auto bits_to_int = [&](std::size_t s) {
    int v = 0;
    for (int b = 0; b < bps; ++b) v = (v << 1) | bits[s * static_cast<std::size_t>(bps) +
                                                      static_cast<std::size_t>(b)];
    return v;
  };

  switch (scheme) {
    case ModScheme::kBpsk:
      for (std::size_t s = 0; s < n_sym; ++s) syms[s] = bits[s] == 0 ? 1.0 : -1.0;
      break;
    case ModScheme::kQpsk:
    case ModScheme::k8Psk:
    case ModScheme::k16Psk: {
      int m = 1 << bps;
      for (std::size_t s = 0; s < n_sym; ++s) {
        int idx = gray_code(bits_to_int(s));
        syms[s] = std::polar(1.0, 2.0 * M_PI * idx / m + M_PI / m);
      }
      break;
    }
    case ModScheme::k16Qam:
    case ModScheme::k64Qam: {
      int half = bps / 2;
      int side = 1 << half;
      // per-axis levels {+-1, +-3, ...}, scaled to unit mean symbol energy:
      // 16QAM -> 1/sqrt(10), 64QAM -> 1/sqrt(42)
      double e = 0.0;
      for (int l = 0; l < side; ++l) {
        double lv = 2.0 * l - (side - 1);
        e += lv * lv;
      }
      double scale = 1.0 / std::sqrt(2.0 * e / side);
      for (std::size_t s = 0; s < n_sym; ++s) {
        int v = bits_to_int(s);
        int gi = gray_code(v >> half);
        int gq = gray_code(v & (side - 1));
        syms[s] = scale * std::complex<double>(2.0 * gi - (side - 1), 2.0 * gq - (side - 1));
      }
      break;
    }
    case ModScheme::kOok:
      for (std::size_t s = 0; s < n_sym; ++s)
        syms[s] = bits[s] == 0 ? 0.0 : std::sqrt(2.0);
      break;
    case ModScheme::k4Ask:
    case ModScheme::k8Ask: {
      int m = 1 << bps;
      double e = 0.0;
      for (int l = 0; l < m; ++l) {
        double lv = 2.0 * l - (m - 1);
        e += lv * lv;
      }
      double scale = 1.0 / std::sqrt(e / m);
      for (std::size_t s = 0; s < n_sym; ++s) {
        int idx = gray_code(bits_to_int(s));
        syms[s] = scale * (2.0 * idx - (m - 1));
      }
      break;
    }
    default:
      throw ConfigError("map_bits_to_symbols: waveform-level scheme");
  }
  return syms;
}

std::vector<std::complex<double>> shape_symbols(const std::vector<std::complex<double>>& syms,
                                                double sym_rate, double f_s, int n_samples) {
  if (syms.empty()) throw ConfigError("shape_symbols: empty symbol stream");
  std::vector<std::complex<double>> out(static_cast<std::size_t>(n_samples));
  double t_sym = 1.0 / sym_rate;
  int half_span = kRrcSpanSymbols / 2;
  for (int n = 0; n < n_samples; ++n) {
    double ts = n / f_s / t_sym;  // time in symbol units
    int k_lo = std::max(0, static_cast<int>(std::ceil(ts - half_span)));
    int k_hi = std::min(static_cast<int>(syms.size()) - 1,
                        static_cast<int>(std::floor(ts + half_span)));
    std::complex<double> acc = 0.0;
    for (int k = k_lo; k <= k_hi; ++k)
      acc += syms[static_cast<std::size_t>(k)] * rrc_pulse(ts - k, kRolloff);
    out[static_cast<std::size_t>(n)] = acc;
  }
  return out;
}

std::vector<std::complex<double>> modulate(ModScheme scheme, double bw, double dur, double f_s,
                                           std::uint64_t seed) {
  if (bw <= 0 || dur <= 0 || f_s <= 0) throw ConfigError("modulate: bw, dur, f_s must be positive");
  if (bw > 0.3 * f_s + 1e-9) throw ConfigError("modulate: bw exceeds 0.3 * f_s");
  int n_samples = static_cast<int>(std::llround(dur * f_s));
  if (n_samples <= 0) throw ConfigError("modulate: empty burst");
  Rng rng(seed);

  std::vector<std::complex<double>> wave;
  if (is_fsk(scheme)) {
    int order = fsk_order(scheme);
    double sym_rate = bw / (order + 1);
    int n_sym = std::max(1, static_cast<int>(std::ceil(dur * sym_rate)));
    std::vector<int> symbols(static_cast<std::size_t>(n_sym));
    for (auto& s : symbols) s = static_cast<int>(rng.uniform_int(0, order - 1));
    wave = fsk_waveform(order, symbols, sym_rate, f_s, n_samples);
  } else if (is_am(scheme)) {
    if (scheme == ModScheme::kAmDsb) {
      auto m = am_message(false, bw / 2.0, f_s, n_samples, rng);
      wave.resize(static_cast<std::size_t>(n_samples));
      for (int n = 0; n < n_samples; ++n)
        wave[static_cast<std::size_t>(n)] = 1.0 + kAmModIndex * m[static_cast<std::size_t>(n)].real();
    } else {
      // Upper sideband in [0, bw] plus carrier, then shifted down by bw/2 so
      // the occupied band is centered on the burst's carrier.
      auto m = am_message(true, bw, f_s, n_samples, rng);
      wave.resize(static_cast<std::size_t>(n_samples));
      for (int n = 0; n < n_samples; ++n) {
        std::complex<double> pre = 1.0 + kAmModIndex * m[static_cast<std::size_t>(n)];
        double shift = -M_PI * bw * n / f_s;  // = 2*pi*(-bw/2)*t
        wave[static_cast<std::size_t>(n)] = pre * std::polar(1.0, shift);
      }
    }
  } else {
    double sym_rate = bw / (1.0 + kRolloff);
    if (dur * sym_rate < 1.0) throw ConfigError("modulate: burst shorter than one symbol");
    int n_sym = std::max(1, static_cast<int>(std::ceil(dur * sym_rate)));
    auto bits = random_bits(n_sym * bits_per_symbol(scheme), rng);
    auto syms = map_bits_to_symbols(scheme, bits);
    wave = shape_symbols(syms, sym_rate, f_s, n_samples);
  }
  normalize_power(wave);
  return wave;
}

std::complex<double> rician_gain(double k_factor, Rng& rng) {
  if (k_factor < 0) throw ConfigError("rician_gain: k_factor must be >= 0");
  double theta = rng.uniform(0.0, 2.0 * M_PI);
  if (k_factor >= kPureLosK) return std::polar(1.0, theta);
  double los = std::sqrt(k_factor / (k_factor + 1.0));
  double diff = std::sqrt(1.0 / (k_factor + 1.0));
  std::complex<double> scatter(rng.normal() * M_SQRT1_2, rng.normal() * M_SQRT1_2);
  return los * std::polar(1.0, theta) + diff * scatter;
}

std::vector<std::complex<double>> apply_channel(const std::vector<std::complex<double>>& x,
                                                const ChannelConfig& cfg, std::uint64_t seed) {
  if (x.empty()) throw ConfigError("apply_channel: empty input");
  if (cfg.k_factor < 0) throw ConfigError("apply_channel: k_factor must be >= 0");
  Rng rng(seed);
  std::vector<std::complex<double>> out(x.size());
  if (cfg.fading_mode == FadingMode::kBlockConstant) {
    auto h = rician_gain(cfg.k_factor, rng);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = h * x[i];
    return out;
  }
  // Time-varying: fixed LOS phasor plus an AR(1) diffuse process with unit
  // stationary variance (normalized Doppler 1e-4 per sample).
  double k = cfg.k_factor;
  double theta = rng.uniform(0.0, 2.0 * M_PI);
  std::complex<double> los = (k >= kPureLosK)
                                 ? std::polar(1.0, theta)
                                 : std::sqrt(k / (k + 1.0)) * std::polar(1.0, theta);
  double diff_amp = (k >= kPureLosK) ? 0.0 : std::sqrt(1.0 / (k + 1.0));
  double rho = std::exp(-2.0 * M_PI * 1e-4);
  double innov = std::sqrt(1.0 - rho * rho);
  std::complex<double> d(rng.normal() * M_SQRT1_2, rng.normal() * M_SQRT1_2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = (los + diff_amp * d) * x[i];
    d = rho * d + innov * std::complex<double>(rng.normal() * M_SQRT1_2,
                                               rng.normal() * M_SQRT1_2);
  }
  return out;
}

double overlap_ratio(const SignalBurst& a, const SignalBurst& b) {
  double t_lo = std::max(a.t_start, b.t_start);
  double t_hi = std::min(a.t_start + a.t_dur, b.t_start + b.t_dur);
  double f_lo = std::max(a.f_c - a.bw / 2, b.f_c - b.bw / 2);
  double f_hi = std::min(a.f_c + a.bw / 2, b.f_c + b.bw / 2);
  double inter = std::max(0.0, t_hi - t_lo) * std::max(0.0, f_hi - f_lo);
  double area_a = a.t_dur * a.bw;
  double area_b = b.t_dur * b.bw;
  double smaller = std::min(area_a, area_b);
  if (smaller <= 0) return 0.0;
  return inter / smaller;
}

bool placement_ok(const SignalBurst& candidate, const std::vector<SignalBurst>& accepted,
                  double max_overlap) {
  for (const auto& other : accepted)
    if (overlap_ratio(candidate, other) > max_overlap) return false;
  return true;
}

IQRecording compose_scene(const SceneSpec& spec, const ChannelConfig& cfg,
                          std::vector<std::complex<double>>* clean_out) {
  if (spec.n_samples <= 0 || spec.f_s <= 0) throw ConfigError("compose_scene: bad spec");
  if (spec.n_signals_min < 1 || spec.n_signals_max < spec.n_signals_min)
    throw ConfigError("compose_scene: bad signal count range");
  const auto& pool = spec.schemes.empty() ? all_schemes() : spec.schemes;
  double t_total = spec.n_samples / spec.f_s;

  Rng rng(spec.rng_seed);
  int k_signals =
      static_cast<int>(rng.uniform_int(spec.n_signals_min, spec.n_signals_max));

  std::vector<SignalBurst> bursts;
  int attempts = 0;
  while (static_cast<int>(bursts.size()) < k_signals) {
    if (++attempts > kPlacementBudget)
      throw GenError("compose_scene: placement failed after " +
                     std::to_string(kPlacementBudget) + " attempts");
    SignalBurst b;
    b.scheme = pool[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
    double dur_frac = rng.log_uniform(0.05, 1.0);
    double bw_frac = rng.log_uniform(0.05, 0.3);
    b.t_dur = dur_frac * t_total;
    b.bw = bw_frac * spec.f_s;
    b.t_start = rng.uniform(0.0, t_total - b.t_dur);
    double f_max = spec.f_s / 2 - b.bw / 2;
    b.f_c = rng.uniform(-f_max, f_max);
    b.amplitude = 1.0;
    b.seed = rng.next_u64();
    if (!placement_ok(b, bursts, spec.max_overlap)) continue;
    bursts.push_back(b);
  }

  std::vector<std::complex<double>> clean(static_cast<std::size_t>(spec.n_samples), 0.0);
  for (const auto& b : bursts) {
    auto wave = modulate(b.scheme, b.bw, b.t_dur, spec.f_s, b.seed);
    auto faded = apply_channel(wave, cfg, derive_seed(b.seed, 0x1));
    int n0 = static_cast<int>(std::llround(b.t_start * spec.f_s));
    n0 = std::max(0, std::min(n0, spec.n_samples - 1));
    int len = std::min(static_cast<int>(faded.size()), spec.n_samples - n0);
    for (int n = 0; n < len; ++n) {
      double t = (n0 + n) / spec.f_s;
      clean[static_cast<std::size_t>(n0 + n)] +=
          b.amplitude * faded[static_cast<std::size_t>(n)] *
          std::polar(1.0, 2.0 * M_PI * b.f_c * t);
    }
  }

  double p_sig = 0.0;
  for (const auto& v : clean) p_sig += std::norm(v);
  p_sig /= static_cast<double>(clean.size());
  double p_noise = p_sig * std::pow(10.0, -cfg.snr_db / 10.0);
  double sigma = std::sqrt(p_noise / 2.0);

  IQRecording rec;
  rec.f_s = spec.f_s;
  rec.bursts = bursts;
  rec.channel = cfg;
  rec.num_signals = k_signals;
  rec.samples.resize(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    std::complex<double> w(sigma * rng.normal(), sigma * rng.normal());
    rec.samples[i] = std::complex<float>(clean[i] + w);
  }
  if (clean_out) *clean_out = std::move(clean);
  return rec;
}

std::vector<GtBox> ground_truth_boxes(const IQRecording& rec, int n_t, int n_f) {
  if (n_t <= 0 || n_f <= 0) throw ConfigError("ground_truth_boxes: bad grid");
  double t_total = static_cast<double>(rec.samples.size()) / rec.f_s;
  std::vector<GtBox> boxes;
  boxes.reserve(rec.bursts.size());
  for (const auto& b : rec.bursts) {
    GtBox box;
    box.class_id = scheme_class_id(b.scheme);
    box.cx = (b.t_start + b.t_dur / 2) / t_total;
    box.cy = b.f_c / rec.f_s + 0.5;  // DC-centered frequency axis
    box.w = b.t_dur / t_total;
    box.h = b.bw / rec.f_s;
    boxes.push_back(box);
  }
  return boxes;
}

void write_iq_file(const std::string& path, const IQRecording& rec) {
  std::vector<std::uint8_t> out;
  out.reserve(rec.samples.size() * 8);
  for (const auto& s : rec.samples) {
    write_f32le(out, s.real());
    write_f32le(out, s.imag());
  }
  write_file_bytes(path, out);
}

std::vector<std::complex<float>> read_iq_file(const std::string& path) {
  auto bytes = read_file_bytes(path);
  if (bytes.size() % 8 != 0) throw IoError("iq file not a whole number of I/Q pairs: " + path);
  std::vector<std::complex<float>> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = {read_f32le(bytes.data() + i * 8), read_f32le(bytes.data() + i * 8 + 4)};
  return out;
}

void write_annotation_file(const std::string& path, const std::vector<GtBox>& boxes) {
  std::ostringstream os;
  os.precision(9);
  for (const auto& b : boxes)
    os << b.class_id << " " << b.cx << " " << b.cy << " " << b.w << " " << b.h << "\n";
  write_file_text(path, os.str());
}

std::vector<GtBox> read_annotation_file(const std::string& path) {
  std::istringstream in(read_file_text(path));
  std::vector<GtBox> boxes;
  GtBox b;
  while (in >> b.class_id >> b.cx >> b.cy >> b.w >> b.h) boxes.push_back(b);
  return boxes;
}

void write_meta_file(const std::string& path, const IQRecording& rec,
                     std::uint64_t scene_seed) {
  std::ostringstream os;
  os.precision(9);
  os << "snr_db=" << rec.channel.snr_db << "\n";
  os << "seed=" << scene_seed << "\n";
  os << "f_s=" << rec.f_s << "\n";
  os << "n=" << rec.samples.size() << "\n";
  write_file_text(path, os.str());
}

}  // namespace hifi::sig
