#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "hifi/tfr.hpp"

using namespace hifi;
using namespace hifi::tfr;

namespace {

// Direct O(n^2) DFT oracle for one frame, FFT-shifted like the implementation.
std::vector<std::complex<double>> dft_shifted(const std::vector<std::complex<double>>& x) {
  int n = static_cast<int>(x.size());
  std::vector<std::complex<double>> out(x.size());
  for (int k = 0; k < n; ++k) {
    std::complex<double> acc = 0;
    for (int i = 0; i < n; ++i)
      acc += x[static_cast<std::size_t>(i)] *
             std::polar(1.0, -2.0 * M_PI * i * k / n);
    out[static_cast<std::size_t>((k + n / 2) % n)] = acc;
  }
  return out;
}

std::vector<std::complex<float>> tone(double f0, double f_s, int n) {
  std::vector<std::complex<float>> x(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    x[static_cast<std::size_t>(i)] =
        std::complex<float>(std::polar(1.0, 2.0 * M_PI * f0 * i / f_s));
  return x;
}

}  // namespace

TEST_CASE("pure tone on a bin center concentrates >= 99% of frame energy (rect window)") {
  int n_fft = 64;
  double f_s = 64000;
  double f0 = 5 * f_s / n_fft;  // exactly bin 5
  auto x = tone(f0, f_s, n_fft * 4);
  auto spec = stft(x, n_fft, n_fft, WindowKind::kRect);
  REQUIRE(spec.rows == 4);
  int expect_col = n_fft / 2 + 5;
  for (int m = 0; m < spec.rows; ++m) {
    double total = 0, at_bin = std::norm(spec.at(m, expect_col));
    for (int k = 0; k < n_fft; ++k) total += std::norm(spec.at(m, k));
    CHECK(at_bin / total >= 0.99);
  }
}

TEST_CASE("stft of one frame matches the direct DFT oracle") {
  Rng rng(4);
  int n_fft = 32;
  std::vector<std::complex<float>> x(static_cast<std::size_t>(n_fft));
  std::vector<std::complex<double>> xd(static_cast<std::size_t>(n_fft));
  for (int i = 0; i < n_fft; ++i) {
    xd[static_cast<std::size_t>(i)] = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    x[static_cast<std::size_t>(i)] = std::complex<float>(xd[static_cast<std::size_t>(i)]);
  }
  // float-val oracle input so both paths see identical samples
  for (int i = 0; i < n_fft; ++i) xd[static_cast<std::size_t>(i)] = std::complex<double>(x[static_cast<std::size_t>(i)]);
  auto spec = stft(x, n_fft, n_fft, WindowKind::kRect);
  auto oracle = dft_shifted(xd);
  for (int k = 0; k < n_fft; ++k)
    CHECK(std::abs(spec.at(0, k) - oracle[static_cast<std::size_t>(k)]) < 1e-9);
}

TEST_CASE("all-zero input gives an all-zero complex matrix") {
  std::vector<std::complex<float>> x(256, 0.0f);
  auto spec = stft(x, 64, 32, WindowKind::kHann);
  for (const auto& v : spec.v) CHECK(std::abs(v) == 0.0);
}

TEST_CASE("Parseval per frame: sum_k |X|^2 = n_fft * sum_n |r w|^2") {
  Rng rng(8);
  int n_fft = 128, hop = 64;
  std::vector<std::complex<float>> x(512);
  for (auto& v : x) v = {static_cast<float>(rng.uniform(-1, 1)),
                         static_cast<float>(rng.uniform(-1, 1))};
  auto w = make_window(WindowKind::kHann, n_fft);
  auto spec = stft(x, n_fft, hop, WindowKind::kHann);
  for (int m = 0; m < spec.rows; ++m) {
    double lhs = 0;
    for (int k = 0; k < n_fft; ++k) lhs += std::norm(spec.at(m, k));
    double rhs = 0;
    for (int i = 0; i < n_fft; ++i) {
      std::size_t idx = static_cast<std::size_t>(m * hop + i);
      std::complex<double> s = idx < x.size() ? std::complex<double>(x[idx]) : 0.0;
      rhs += std::norm(s * w[static_cast<std::size_t>(i)]);
    }
    rhs *= n_fft;
    if (rhs > 0) CHECK(std::abs(lhs - rhs) / rhs < 1e-6);
  }
}

TEST_CASE("stft is linear within 1e-6") {
  Rng rng(15);
  int n = 320;
  std::vector<std::complex<float>> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n)), z(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    x[static_cast<std::size_t>(i)] = {static_cast<float>(rng.uniform(-1, 1)),
                                      static_cast<float>(rng.uniform(-1, 1))};
    y[static_cast<std::size_t>(i)] = {static_cast<float>(rng.uniform(-1, 1)),
                                      static_cast<float>(rng.uniform(-1, 1))};
    z[static_cast<std::size_t>(i)] =
        2.0f * x[static_cast<std::size_t>(i)] - 3.0f * y[static_cast<std::size_t>(i)];
  }
  auto sx = stft(x, 64, 32, WindowKind::kHann);
  auto sy = stft(y, 64, 32, WindowKind::kHann);
  auto sz = stft(z, 64, 32, WindowKind::kHann);
  // relative tolerance: the float32 combination of the inputs already
  // carries ~1e-7 per-sample rounding into the frame sums
  for (std::size_t i = 0; i < sz.v.size(); ++i) {
    std::complex<double> want = 2.0 * sx.v[i] - 3.0 * sy.v[i];
    CHECK(std::abs(sz.v[i] - want) <= 1e-6 * (1.0 + std::abs(want)));
  }
}

TEST_CASE("stft geometry: 204800 samples, n_fft 640, hop 320 gives 640x640") {
  std::vector<std::complex<float>> x(204800, {1.0f, 0.0f});
  auto spec = stft(x, 640, 320, WindowKind::kHann);
  CHECK(spec.rows == 640);
  CHECK(spec.cols == 640);
}

TEST_CASE("log_normalize: all-zero STFT gives a uniform matrix") {
  Matc x(4, 8);
  auto s = log_normalize(x);
  for (double v : s.values.v) CHECK(v == 0.0);
}

TEST_CASE("log_normalize is scale invariant") {
  Rng rng(3);
  Matc x(6, 10);
  for (auto& v : x.v) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  Matc x10 = x;
  for (auto& v : x10.v) v *= 10.0;
  auto a = log_normalize(x);
  auto b = log_normalize(x10);
  for (std::size_t i = 0; i < a.values.v.size(); ++i)
    CHECK(a.values.v[i] == doctest::Approx(b.values.v[i]).epsilon(1e-9));
}

TEST_CASE("log_normalize: dominant bin maps to 1, floor is monotone in dB") {
  // Closed-form oracle: power p in dB relative to peak maps to 1 + d/80.
  Matc x(1, 4);
  x.at(0, 0) = 100.0;   // 40 dB above the 1.0 entries
  x.at(0, 1) = 1.0;
  x.at(0, 2) = 10.0;
  x.at(0, 3) = 0.0;     // below the floor
  auto s = log_normalize(x, -60.0);
  CHECK(s.values.at(0, 0) == doctest::Approx(1.0));
  // entry 1: 20*log10(1/100) = -40 dB -> (−40+60)/60
  CHECK(s.values.at(0, 1) == doctest::Approx((60.0 - 40.0) / 60.0).epsilon(1e-6));
  // entry 2: -20 dB
  CHECK(s.values.at(0, 2) == doctest::Approx((60.0 - 20.0) / 60.0).epsilon(1e-6));
  CHECK(s.values.at(0, 3) >= 0.0);
  CHECK(s.values.at(0, 3) < 0.01);
  // monotone: higher power -> higher normalized value
  CHECK(s.values.at(0, 0) > s.values.at(0, 2));
  CHECK(s.values.at(0, 2) > s.values.at(0, 1));
  CHECK(s.values.at(0, 1) > s.values.at(0, 3));
}

TEST_CASE("gaussian pyramid on 640x640 with L=5 gives 320/160/80/40/20") {
  Matd x(640, 640, 1.0);
  auto p = gaussian_pyramid(x, 5);
  REQUIRE(p.levels.size() == 6);
  int want[6] = {640, 320, 160, 80, 40, 20};
  for (int l = 0; l <= 5; ++l) {
    CHECK(p.levels[static_cast<std::size_t>(l)].rows == want[l]);
    CHECK(p.levels[static_cast<std::size_t>(l)].cols == want[l]);
  }
}

TEST_CASE("gaussian pyramid of a constant is constant at every level") {
  Matd x(64, 64, 3.25);
  auto p = gaussian_pyramid(x, 3);
  for (const auto& lvl : p.levels)
    for (double v : lvl.v) CHECK(v == doctest::Approx(3.25).epsilon(1e-12));
}

TEST_CASE("gaussian blur of an interior impulse reproduces the separable kernel") {
  // Direct convolution oracle.
  Matd x(16, 16, 0.0);
  x.at(8, 8) = 1.0;
  auto b = gaussian_blur5(x);
  const double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  double mass = 0;
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) {
      double want = 0;
      if (std::abs(r - 8) <= 2 && std::abs(c - 8) <= 2) want = k[r - 6] * k[c - 6];
      CHECK(b.at(r, c) == doctest::Approx(want).epsilon(1e-12));
      mass += b.at(r, c);
    }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));  // blur preserves mass

  // level-1 of the pyramid samples the blurred impulse on the even lattice
  auto p = gaussian_pyramid(x, 1);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c)
      CHECK(p.levels[1].at(r, c) == doctest::Approx(b.at(2 * r, 2 * c)).epsilon(1e-12));
}

TEST_CASE("gaussian levels are non-amplifying") {
  Rng rng(31);
  Matd x(64, 64);
  for (auto& v : x.v) v = rng.uniform(0, 1);
  auto p = gaussian_pyramid(x, 4);
  for (std::size_t l = 1; l < p.levels.size(); ++l) {
    double prev_max = *std::max_element(p.levels[l - 1].v.begin(), p.levels[l - 1].v.end());
    double cur_max = *std::max_element(p.levels[l].v.begin(), p.levels[l].v.end());
    CHECK(cur_max <= prev_max + 1e-9);
  }
}

TEST_CASE("laplacian pyramid of a constant is ~0 everywhere (except the top)") {
  Matd x(32, 32, 1.5);
  auto p = laplacian_pyramid(x, 3);
  REQUIRE(p.levels.size() == 4);
  for (std::size_t l = 0; l + 1 < p.levels.size(); ++l)
    for (double v : p.levels[l].v) CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("laplacian reconstruction recovers the input within 1e-5 relative") {
  Rng rng(12);
  Matd x(64, 64);
  for (auto& v : x.v) v = rng.uniform(0, 1);
  auto p = laplacian_pyramid(x, 4);
  auto back = collapse_laplacian(p);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    num += (back.v[i] - x.v[i]) * (back.v[i] - x.v[i]);
    den += x.v[i] * x.v[i];
  }
  CHECK(std::sqrt(num / den) < 1e-5);
}

TEST_CASE("white noise: Laplacian level-0 variance exceeds Gaussian level-1 variance") {
  Rng rng(55);
  Matd x(64, 64);
  for (auto& v : x.v) v = rng.normal();
  auto lp = laplacian_pyramid(x, 2);
  auto gp = gaussian_pyramid(x, 2);
  auto variance = [](const Matd& m) {
    double mean = 0;
    for (double v : m.v) mean += v;
    mean /= static_cast<double>(m.v.size());
    double var = 0;
    for (double v : m.v) var += (v - mean) * (v - mean);
    return var / static_cast<double>(m.v.size());
  };
  CHECK(variance(lp.levels[0]) > variance(gp.levels[1]));
}

TEST_CASE("pyramid rejects non-divisible dimensions") {
  Matd x(100, 100);
  CHECK_THROWS_AS(gaussian_pyramid(x, 3), ShapeError);  // 100 % 8 != 0
}

TEST_CASE("tone ridge lands on the ground-truth frequency pixel (+-1)") {
  // A burst at carrier f_c must put its energy at the column predicted by
  // the ground-truth box on the DC-centered axis.
  double f_s = 200000;
  int n = 16000, n_fft = 160, hop = 100;
  for (double f_c : {-60000.0, -12500.0, 0.0, 31250.0, 70000.0}) {
    auto x = tone(f_c, f_s, n);
    auto spec = stft(x, n_fft, hop, WindowKind::kHann);
    auto s = log_normalize(spec);
    // middle frame peak column
    int m = spec.rows / 2;
    int best = 0;
    for (int k = 1; k < n_fft; ++k)
      if (s.values.at(m, k) > s.values.at(m, best)) best = k;
    double y_norm = f_c / f_s + 0.5;  // ground-truth convention
    double predicted = y_norm * n_fft;
    CHECK(std::abs(best + 0.5 - predicted) <= 1.0);
  }
}

TEST_CASE("spectrogram file round trip") {
  Matf m(5, 7);
  Rng rng(2);
  for (auto& v : m.v) v = static_cast<float>(rng.uniform(0, 1));
  write_spectrogram("spec_test.bin", m);
  auto back = read_spectrogram("spec_test.bin");
  CHECK(back.rows == 5);
  CHECK(back.cols == 7);
  CHECK(back.v == m.v);
  std::remove("spec_test.bin");
}

TEST_CASE("pgm export writes a valid header and payload") {
  Matf m(4, 3, 0.5f);
  write_pgm("img_test.pgm", m);
  auto bytes = read_file_bytes("img_test.pgm");
  std::string head(bytes.begin(), bytes.begin() + 2);
  CHECK(head == "P5");
  CHECK(bytes.size() >= 12);
  std::remove("img_test.pgm");
}
