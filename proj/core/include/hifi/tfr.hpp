#pragma once

#include <complex>
#include <string>
#include <vector>

#include "hifi/common.hpp"
#include "hifi/sigsynth.hpp"

namespace hifi::tfr {

/// Dense row-major matrix.
template <typename T>
struct Mat {
  int rows = 0, cols = 0;
  std::vector<T> v;

  Mat() = default;
  Mat(int r, int c, T fill = T(0))
      : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}
  T& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  T at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return v.size(); }
};

using Matd = Mat<double>;
using Matf = Mat<float>;
using Matc = Mat<std::complex<double>>;

enum class WindowKind { kRect, kHann };

std::vector<double> make_window(WindowKind kind, int n);

/// STFT of complex baseband samples. Row m, column k holds the windowed DFT
/// of frame m with the frequency axis FFT-shifted (DC at column n_fft/2).
/// Frames advance by hop; the trailing partial frame is zero-padded, giving
/// ceil(N/hop) rows. n_fft must be even, hop <= n_fft.
Matc stft(const std::vector<std::complex<float>>& samples, int n_fft, int hop,
          WindowKind window);
Matc stft(const sig::IQRecording& rec, int n_fft, int hop, WindowKind window);

/// Log-power, peak-normalized spectrogram mapped to [0,1] for network input:
/// d = 10*log10(|X|^2 + eps) - peak_db, clipped at floor_db, then (d -
/// floor_db)/(-floor_db). All-zero input maps to all zeros.
struct Spectrogram {
  Matd values;  // N_t x N_f in [0,1]
  std::vector<double> window;
  int hop = 0;
  double f_s = 0.0;
};

Spectrogram log_normalize(const Matc& x, double floor_db = -80.0);

/// 5x5 binomial blur (reflect-101 borders), used by pyramid construction.
Matd gaussian_blur5(const Matd& m);

/// Bilinear x2 upsample (align-corners-false), used for Laplacian synthesis.
Matd upsample2_bilinear(const Matd& m);

struct GaussianPyramid {
  std::vector<Matd> levels;  // levels[0] is the input; L+1 entries
};

/// Blur-then-decimate pyramid. Both input dims must be divisible by 2^L.
GaussianPyramid gaussian_pyramid(const Matd& x, int levels);

/// Band-pass pyramid: level l = G^(l) - up(G^(l+1)); the last entry is the
/// Gaussian top. collapse_laplacian inverts it exactly (up to roundoff).
struct LaplacianPyramid {
  std::vector<Matd> levels;  // L band-pass + 1 low-pass, L+1 entries
};

LaplacianPyramid laplacian_pyramid(const Matd& x, int levels);
Matd collapse_laplacian(const LaplacianPyramid& p);

// --- persistence -------------------------------------------------------------

/// 8-byte header (rows, cols as little-endian u32) then row-major float32.
void write_spectrogram(const std::string& path, const Matf& m);
Matf read_spectrogram(const std::string& path);

Matf to_f32(const Matd& m);

/// 8-bit grayscale PGM for inspection. Rows of the image are frequency (so
/// time runs horizontally); input values are clamped to [0,1].
void write_pgm(const std::string& path, const Matf& values);

}  // namespace hifi::tfr
