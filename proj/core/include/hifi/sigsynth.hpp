#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "hifi/common.hpp"

namespace hifi::sig {

/// The 14 modulation schemes, class ids 0..13 in declaration order.
enum class ModScheme : int {
  kBpsk = 0,
  kQpsk,
  k8Psk,
  k16Psk,
  k16Qam,
  k64Qam,
  k2Fsk,
  k4Fsk,
  k8Fsk,
  kOok,
  k4Ask,
  k8Ask,
  kAmDsb,
  kAmSsb,
};

constexpr int kNumSchemes = 14;

int scheme_class_id(ModScheme s);
const char* scheme_name(ModScheme s);
ModScheme scheme_from_name(const std::string& name);
const std::vector<ModScheme>& all_schemes();

/// One modulated transmission placed in the scene.
struct SignalBurst {
  ModScheme scheme = ModScheme::kBpsk;
  double f_c = 0.0;      // carrier offset, Hz
  double t_start = 0.0;  // s
  double t_dur = 0.0;    // s
  double bw = 0.0;       // occupied bandwidth, Hz
  double amplitude = 1.0;
  std::uint64_t seed = 0;
};

enum class FadingMode { kBlockConstant, kTimeVarying };

struct ChannelConfig {
  double k_factor = 4.0;
  double snr_db = 0.0;
  FadingMode fading_mode = FadingMode::kBlockConstant;
};

struct SceneSpec {
  // Burst count is drawn uniformly from [n_signals_min, n_signals_max].
  int n_signals_min = 3;
  int n_signals_max = 5;
  double max_overlap = 0.4;
  int n_samples = 204800;
  double f_s = 200000.0;
  std::uint64_t rng_seed = 0;
  std::vector<ModScheme> schemes;  // candidate pool; empty means all 14
};

struct IQRecording {
  std::vector<std::complex<float>> samples;
  double f_s = 0.0;
  std::vector<SignalBurst> bursts;
  ChannelConfig channel;
  int num_signals = 0;
};

// --- modulators -------------------------------------------------------------

/// Constellation points for the keyed schemes, unit mean symbol energy
/// (FSK and AM are waveform-level and not covered here).
std::vector<std::complex<double>> map_bits_to_symbols(ModScheme scheme,
                                                      const std::vector<int>& bits);
int bits_per_symbol(ModScheme scheme);

/// Root-raised-cosine shaping of a symbol stream (rolloff 0.35, span 8),
/// evaluated at n_samples points of rate f_s. No power normalization.
std::vector<std::complex<double>> shape_symbols(const std::vector<std::complex<double>>& syms,
                                                double sym_rate, double f_s, int n_samples);

/// Unit-average-power complex baseband burst of length round(dur*f_s).
/// Linear schemes are RRC-shaped, FSK is continuous-phase, AM modulates a
/// band-limited random message (index 0.5).
std::vector<std::complex<double>> modulate(ModScheme scheme, double bw, double dur, double f_s,
                                           std::uint64_t seed);

// --- channel ----------------------------------------------------------------

/// One Rician gain draw, E[|h|^2] = 1, LOS/diffuse power ratio = k_factor.
/// k_factor >= 1e6 is treated as the pure-LOS limit (|h| = 1 exactly).
std::complex<double> rician_gain(double k_factor, Rng& rng);

/// Applies Rician fading to x: one gain for the whole burst in
/// block-constant mode, an AR(1) diffuse component in time-varying mode.
std::vector<std::complex<double>> apply_channel(const std::vector<std::complex<double>>& x,
                                                const ChannelConfig& cfg, std::uint64_t seed);

// --- scene composition -------------------------------------------------------

/// Time-frequency rectangle intersection over the smaller rectangle's area.
double overlap_ratio(const SignalBurst& a, const SignalBurst& b);

/// True if candidate keeps every pairwise overlap within max_overlap.
bool placement_ok(const SignalBurst& candidate, const std::vector<SignalBurst>& accepted,
                  double max_overlap);

/// Draws bursts, applies per-burst fading, mixes to carriers, and adds AWGN
/// calibrated to cfg.snr_db against the composite signal power. Deterministic
/// in spec.rng_seed. clean_out, when non-null, receives the noiseless sum.
IQRecording compose_scene(const SceneSpec& spec, const ChannelConfig& cfg,
                          std::vector<std::complex<double>>* clean_out = nullptr);

// --- ground truth -------------------------------------------------------------

/// Axis-aligned box in normalized [0,1]^2, center-size form. x is the time
/// axis, y the frequency axis with DC at 0.5 (FFT-shifted convention).
struct GtBox {
  int class_id = 0;
  double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;
};

/// Boxes for every burst of a recording. n_t/n_f name the target spectrogram
/// grid; coordinates are grid-independent but validated against it.
std::vector<GtBox> ground_truth_boxes(const IQRecording& rec, int n_t, int n_f);

// --- file interfaces ----------------------------------------------------------

/// Little-endian interleaved float32 (I,Q) pairs.
void write_iq_file(const std::string& path, const IQRecording& rec);
std::vector<std::complex<float>> read_iq_file(const std::string& path);

/// One line per burst: `class_id x_center y_center width height`.
void write_annotation_file(const std::string& path, const std::vector<GtBox>& boxes);
std::vector<GtBox> read_annotation_file(const std::string& path);

/// key=value scene metadata (snr_db, seed, f_s, n).
void write_meta_file(const std::string& path, const IQRecording& rec,
                     std::uint64_t scene_seed);

}  // namespace hifi::sig
