#include "hifi/tfr.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>

namespace hifi::tfr {

namespace {

constexpr double kLogEpsRel = 1e-12;  // relative to peak power

/// FFTW plan wrapper; plan creation is serialized (FFTW requirement).
class Fft {
 public:
  explicit Fft(int n) : n_(n) {
    in_ = fftw_alloc_complex(static_cast<std::size_t>(n));
    out_ = fftw_alloc_complex(static_cast<std::size_t>(n));
    static std::mutex plan_mutex;
    std::lock_guard<std::mutex> lock(plan_mutex);
    plan_ = fftw_plan_dft_1d(n, in_, out_, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  ~Fft() {
    static std::mutex plan_mutex;
    {
      std::lock_guard<std::mutex> lock(plan_mutex);
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  void forward(const std::complex<double>* x, std::complex<double>* y) {
    std::memcpy(in_, x, sizeof(fftw_complex) * static_cast<std::size_t>(n_));
    fftw_execute(plan_);
    std::memcpy(y, out_, sizeof(fftw_complex) * static_cast<std::size_t>(n_));
  }

 private:
  int n_;
  fftw_complex *in_, *out_;
  fftw_plan plan_;
};

int reflect101(int i, int n) {
  // ... -2 -1 | 0 1 2 ... n-1 | n n+1 ... maps to 2 1 | 0 1 2 .. n-1 | n-2 n-3
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace

std::vector<double> make_window(WindowKind kind, int n) {
  std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  if (kind == WindowKind::kHann) {
    for (int i = 0; i < n; ++i)
      w[static_cast<std::size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / n));
  }
  return w;
}

Matc stft(const std::vector<std::complex<float>>& samples, int n_fft, int hop,
          WindowKind window) {
  if (samples.empty()) throw ConfigError("stft: empty recording");
  if (n_fft <= 0 || n_fft % 2 != 0) throw ConfigError("stft: n_fft must be even and positive");
  if (hop <= 0 || hop > n_fft) throw ConfigError("stft: need 0 < hop <= n_fft");
  int n = static_cast<int>(samples.size());
  int n_frames = (n + hop - 1) / hop;
  auto w = make_window(window, n_fft);

  Matc out(n_frames, n_fft);
  Fft fft(n_fft);
  std::vector<std::complex<double>> frame(static_cast<std::size_t>(n_fft));
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(n_fft));
  int half = n_fft / 2;
  for (int m = 0; m < n_frames; ++m) {
    for (int i = 0; i < n_fft; ++i) {
      int idx = m * hop + i;
      std::complex<double> s =
          idx < n ? std::complex<double>(samples[static_cast<std::size_t>(idx)]) : 0.0;
      frame[static_cast<std::size_t>(i)] = s * w[static_cast<std::size_t>(i)];
    }
    fft.forward(frame.data(), spec.data());
    // FFT-shift so DC lands at column n_fft/2
    for (int k = 0; k < n_fft; ++k)
      out.at(m, k) = spec[static_cast<std::size_t>((k + half) % n_fft)];
  }
  return out;
}

Matc stft(const sig::IQRecording& rec, int n_fft, int hop, WindowKind window) {
  return stft(rec.samples, n_fft, hop, window);
}

Spectrogram log_normalize(const Matc& x, double floor_db) {
  if (x.size() == 0) throw ConfigError("log_normalize: empty input");
  Spectrogram out;
  out.values = Matd(x.rows, x.cols);
  double peak = 0.0;
  for (const auto& v : x.v) peak = std::max(peak, std::norm(v));
  if (peak <= 0.0) return out;  // all-zero input -> uniform zeros
  double eps = kLogEpsRel * peak;
  double peak_db = 10.0 * std::log10(peak + eps);
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    double d = 10.0 * std::log10(std::norm(x.v[i]) + eps) - peak_db;
    d = std::max(d, floor_db);
    out.values.v[i] = (d - floor_db) / (-floor_db);
  }
  return out;
}

Matd gaussian_blur5(const Matd& m) {
  static const double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  Matd tmp(m.rows, m.cols), out(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) {
      double acc = 0;
      for (int d = -2; d <= 2; ++d) acc += k[d + 2] * m.at(r, reflect101(c + d, m.cols));
      tmp.at(r, c) = acc;
    }
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) {
      double acc = 0;
      for (int d = -2; d <= 2; ++d) acc += k[d + 2] * tmp.at(reflect101(r + d, m.rows), c);
      out.at(r, c) = acc;
    }
  return out;
}

Matd upsample2_bilinear(const Matd& m) {
  Matd out(m.rows * 2, m.cols * 2);
  auto sample = [&](double pr, double pc) {
    pr = std::min(std::max(pr, 0.0), static_cast<double>(m.rows - 1));
    pc = std::min(std::max(pc, 0.0), static_cast<double>(m.cols - 1));
    int r0 = static_cast<int>(std::floor(pr)), c0 = static_cast<int>(std::floor(pc));
    int r1 = std::min(r0 + 1, m.rows - 1), c1 = std::min(c0 + 1, m.cols - 1);
    double fr = pr - r0, fc = pc - c0;
    return (1 - fr) * ((1 - fc) * m.at(r0, c0) + fc * m.at(r0, c1)) +
           fr * ((1 - fc) * m.at(r1, c0) + fc * m.at(r1, c1));
  };
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c)
      out.at(r, c) = sample((r + 0.5) / 2.0 - 0.5, (c + 0.5) / 2.0 - 0.5);
  return out;
}

GaussianPyramid gaussian_pyramid(const Matd& x, int levels) {
  if (levels < 1) throw ConfigError("gaussian_pyramid: need levels >= 1");
  int div = 1 << levels;
  if (x.rows % div != 0 || x.cols % div != 0)
    throw ShapeError("gaussian_pyramid: dims must be divisible by 2^L");
  GaussianPyramid p;
  p.levels.push_back(x);
  for (int l = 1; l <= levels; ++l) {
    const Matd& prev = p.levels.back();
    Matd blurred = gaussian_blur5(prev);
    Matd next(prev.rows / 2, prev.cols / 2);
    for (int r = 0; r < next.rows; ++r)
      for (int c = 0; c < next.cols; ++c) next.at(r, c) = blurred.at(2 * r, 2 * c);
    p.levels.push_back(std::move(next));
  }
  return p;
}

LaplacianPyramid laplacian_pyramid(const Matd& x, int levels) {
  auto g = gaussian_pyramid(x, levels);
  LaplacianPyramid p;
  for (int l = 0; l < levels; ++l) {
    Matd up = upsample2_bilinear(g.levels[static_cast<std::size_t>(l + 1)]);
    Matd band = g.levels[static_cast<std::size_t>(l)];
    for (std::size_t i = 0; i < band.v.size(); ++i) band.v[i] -= up.v[i];
    p.levels.push_back(std::move(band));
  }
  p.levels.push_back(g.levels.back());
  return p;
}

Matd collapse_laplacian(const LaplacianPyramid& p) {
  if (p.levels.empty()) throw ConfigError("collapse_laplacian: empty pyramid");
  Matd x = p.levels.back();
  for (int l = static_cast<int>(p.levels.size()) - 2; l >= 0; --l) {
    Matd up = upsample2_bilinear(x);
    x = p.levels[static_cast<std::size_t>(l)];
    for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] += up.v[i];
  }
  return x;
}

void write_spectrogram(const std::string& path, const Matf& m) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + m.size() * 4);
  write_u32le(out, static_cast<std::uint32_t>(m.rows));
  write_u32le(out, static_cast<std::uint32_t>(m.cols));
  for (float v : m.v) write_f32le(out, v);
  write_file_bytes(path, out);
}

Matf read_spectrogram(const std::string& path) {
  auto bytes = read_file_bytes(path);
  if (bytes.size() < 8) throw IoError("spectrogram file too short: " + path);
  int rows = static_cast<int>(read_u32le(bytes.data()));
  int cols = static_cast<int>(read_u32le(bytes.data() + 4));
  if (bytes.size() != 8 + static_cast<std::size_t>(rows) * cols * 4)
    throw IoError("spectrogram file size mismatch: " + path);
  Matf m(rows, cols);
  for (std::size_t i = 0; i < m.v.size(); ++i)
    m.v[i] = read_f32le(bytes.data() + 8 + i * 4);
  return m;
}

Matf to_f32(const Matd& m) {
  Matf out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.v.size(); ++i) out.v[i] = static_cast<float>(m.v[i]);
  return out;
}

void write_pgm(const std::string& path, const Matf& values) {
  // values are [time, freq]; the image puts frequency on the vertical axis
  int w = values.rows, h = values.cols;
  std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float v = std::min(1.0f, std::max(0.0f, values.at(x, y)));
      out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
    }
  write_file_bytes(path, out);
}

}  // namespace hifi::tfr
